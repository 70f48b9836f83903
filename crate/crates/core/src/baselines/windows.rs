//! Window construction for the sliding-window baselines.
//!
//! Every builder returns one window per event, ending at that event. Near
//! the start of the stream fixed-size windows are shorter than `n`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::events::{seconds_between, ObservationAlphabet, SensorEvent};

/// A contiguous run of events ending at `end`, with one weight per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub weights: Vec<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

fn check(events: &[SensorEvent]) -> Result<(), BaselineError> {
    if events.is_empty() {
        Err(BaselineError::EmptyStream)
    } else {
        Ok(())
    }
}

fn positive(n: usize, what: &str) -> Result<(), BaselineError> {
    if n == 0 {
        Err(BaselineError::BadParameter(format!("{what} must be positive")))
    } else {
        Ok(())
    }
}

fn fixed(end: usize, n: usize) -> Window {
    let start = (end + 1).saturating_sub(n);
    Window {
        start,
        end,
        weights: vec![1.0; end + 1 - start],
    }
}

/// Last `n` events, equal weights.
pub fn windows_sw(events: &[SensorEvent], n: usize) -> Result<Vec<Window>, BaselineError> {
    check(events)?;
    positive(n, "window size")?;
    Ok((0..events.len()).map(|i| fixed(i, n)).collect())
}

/// Every event no more than `span_secs` before the last one.
pub fn windows_tw(events: &[SensorEvent], span_secs: f64) -> Result<Vec<Window>, BaselineError> {
    check(events)?;
    if !(span_secs > 0.0) {
        return Err(BaselineError::BadParameter("time span must be positive".into()));
    }
    let mut start = 0;
    Ok((0..events.len())
        .map(|i| {
            while seconds_between(&events[start].timestamp, &events[i].timestamp) > span_secs {
                start += 1;
            }
            Window {
                start,
                end: i,
                weights: vec![1.0; i + 1 - start],
            }
        })
        .collect())
}

/// Last `n` events weighted `exp(-λ·Δt)` by their age relative to the last.
pub fn windows_swtw(events: &[SensorEvent], n: usize, lambda: f64) -> Result<Vec<Window>, BaselineError> {
    check(events)?;
    positive(n, "window size")?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(BaselineError::BadParameter("decay must be finite and >= 0".into()));
    }
    Ok((0..events.len())
        .map(|i| {
            let mut w = fixed(i, n);
            for (k, j) in w.indices().enumerate() {
                w.weights[k] = (-lambda * seconds_between(&events[j].timestamp, &events[i].timestamp)).exp();
            }
            w
        })
        .collect())
}

/// Decay that leaves the oldest event of a typical `n`-event window with
/// weight 0.1, from the median span of such windows.
pub fn default_decay(events: &[SensorEvent], n: usize) -> f64 {
    let mut spans: Vec<f64> = (n.max(1) - 1..events.len())
        .map(|i| seconds_between(&events[i + 1 - n.max(1)].timestamp, &events[i].timestamp))
        .filter(|s| *s > 0.0)
        .collect();
    if spans.is_empty() {
        return 0.0;
    }
    spans.sort_by(f64::total_cmp);
    10f64.ln() / spans[spans.len() / 2]
}

/// Mutual information between the sensors of consecutive events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiTable {
    pub sensors: Vec<String>,
    /// Symmetric, `sensors.len()` square.
    pub mi: Vec<Vec<f64>>,
}

impl MiTable {
    /// For each sensor pair (x, y) the MI of the indicators "this event is
    /// x" and "the neighbouring event is y", over both orders of every
    /// consecutive pair.
    pub fn fit(events: &[SensorEvent]) -> Self {
        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        for e in events {
            let n = ids.len();
            ids.entry(e.sensor_id.as_str()).or_insert(n);
        }
        let sensors: Vec<String> = {
            let mut v = vec![String::new(); ids.len()];
            for (s, &i) in &ids {
                v[i] = (*s).to_owned();
            }
            v
        };
        let n = sensors.len();
        let seq: Vec<usize> = events.iter().map(|e| ids[e.sensor_id.as_str()]).collect();
        let mut joint = vec![vec![0.0; n]; n];
        let mut total = 0.0;
        for w in seq.windows(2) {
            joint[w[0]][w[1]] += 1.0;
            joint[w[1]][w[0]] += 1.0;
            total += 2.0;
        }
        let mut mi = vec![vec![0.0; n]; n];
        if total > 0.0 {
            let marg: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / total).collect();
            for x in 0..n {
                for y in 0..n {
                    mi[x][y] = indicator_mi(joint[x][y] / total, marg[x], marg[y]);
                }
            }
        }
        Self { sensors, mi }
    }

    pub fn get(&self, a: &str, b: &str) -> f64 {
        let i = self.sensors.iter().position(|s| s == a);
        let j = self.sensors.iter().position(|s| s == b);
        match (i, j) {
            (Some(i), Some(j)) => self.mi[i][j],
            _ => 0.0,
        }
    }

    fn max(&self) -> f64 {
        self.mi.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// MI of two binary indicators given P(both), P(a) and P(b).
fn indicator_mi(p11: f64, pa: f64, pb: f64) -> f64 {
    let cells = [
        (p11, pa, pb),
        (pa - p11, pa, 1.0 - pb),
        (pb - p11, 1.0 - pa, pb),
        (1.0 - pa - pb + p11, 1.0 - pa, 1.0 - pb),
    ];
    cells
        .iter()
        .filter(|(p, x, y)| *p > 1e-15 && *x > 0.0 && *y > 0.0)
        .map(|(p, x, y)| p * (p / (x * y)).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Last `n` events weighted by their sensor's MI with the last event's
/// sensor, scaled by the table maximum; the last event has weight 1.
pub fn windows_swmi(events: &[SensorEvent], n: usize, table: &MiTable) -> Result<Vec<Window>, BaselineError> {
    check(events)?;
    positive(n, "window size")?;
    let top = table.max();
    Ok((0..events.len())
        .map(|i| {
            let mut w = fixed(i, n);
            let last = &events[i].sensor_id;
            for (k, j) in w.indices().enumerate() {
                w.weights[k] = if j == i {
                    1.0
                } else if top > 0.0 {
                    table.get(&events[j].sensor_id, last) / top
                } else {
                    0.0
                };
            }
            w
        })
        .collect())
}

/// Windows whose length depends on a previewed class: `sizes[c]` events
/// for preview class `c`, `fallback` for `None`.
pub fn windows_dw(
    events: &[SensorEvent],
    preview: &[Option<usize>],
    sizes: &[usize],
    fallback: usize,
) -> Result<Vec<Window>, BaselineError> {
    check(events)?;
    positive(fallback, "fallback window size")?;
    if sizes.contains(&0) {
        return Err(BaselineError::BadParameter("per-class window sizes must be positive".into()));
    }
    if preview.len() != events.len() {
        return Err(BaselineError::BadParameter("one preview per event required".into()));
    }
    Ok(preview
        .iter()
        .enumerate()
        .map(|(i, p)| fixed(i, p.and_then(|c| sizes.get(c).copied()).unwrap_or(fallback)))
        .collect())
}

/// Weighted symbol counts over the alphabet columns (unknown last), the
/// time of day of the last event and the window span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub counts: Vec<f64>,
    pub time_of_day: f64,
    pub span: f64,
}

pub fn features(events: &[SensorEvent], symbols: &[usize], alphabet: &ObservationAlphabet, w: &Window) -> WindowFeatures {
    let mut counts = vec![0.0; alphabet.n_columns()];
    for (k, j) in w.indices().enumerate() {
        counts[symbols[j]] += w.weights[k];
    }
    WindowFeatures {
        counts,
        time_of_day: events[w.end].seconds_of_day(),
        span: seconds_between(&events[w.start].timestamp, &events[w.end].timestamp),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::parse_timestamp;

    fn stream(sensors: &[&str], gap_secs: i64) -> Vec<SensorEvent> {
        let t0 = parse_timestamp("2011-06-15", "08:00:00").unwrap();
        sensors
            .iter()
            .enumerate()
            .map(|(i, s)| SensorEvent::new(t0 + chrono::Duration::seconds(gap_secs * i as i64), *s, "ON"))
            .collect()
    }

    #[test]
    fn sw_of_one() {
        let ev = stream(&["A", "B", "C"], 5);
        for (i, w) in windows_sw(&ev, 1).unwrap().iter().enumerate() {
            assert_eq!((w.start, w.end), (i, i));
            assert_eq!(w.weights, vec![1.0]);
        }
    }

    #[test]
    fn sw_has_n_after_warm_up() {
        let ev = stream(&["A"; 30], 5);
        let ws = windows_sw(&ev, 20).unwrap();
        assert_eq!(ws.len(), 30);
        assert!(ws[19..].iter().all(|w| w.len() == 20));
        assert_eq!(ws[4].len(), 5);
    }

    #[test]
    fn tw_wide_span_takes_everything() {
        let ev = stream(&["A", "B", "C", "D"], 60);
        for (i, w) in windows_tw(&ev, 1e9).unwrap().iter().enumerate() {
            assert_eq!((w.start, w.end), (0, i));
        }
        let narrow = windows_tw(&ev, 60.0).unwrap();
        assert_eq!((narrow[3].start, narrow[3].end), (2, 3));
    }

    #[test]
    fn swtw_zero_decay_is_sw() {
        let ev = stream(&["A", "B", "C", "D", "E"], 7);
        assert_eq!(windows_swtw(&ev, 3, 0.0).unwrap(), windows_sw(&ev, 3).unwrap());
        let decayed = windows_swtw(&ev, 3, 0.1).unwrap();
        assert!((decayed[4].weights[0] - (-1.4f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn default_decay_hits_a_tenth() {
        let ev = stream(&["A"; 40], 3);
        let lambda = default_decay(&ev, 20);
        let w = windows_swtw(&ev, 20, lambda).unwrap();
        assert!((w[30].weights[0] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn bad_parameters() {
        let ev = stream(&["A"], 1);
        assert_eq!(windows_sw(&[], 3), Err(BaselineError::EmptyStream));
        assert!(matches!(windows_sw(&ev, 0), Err(BaselineError::BadParameter(_))));
        assert!(matches!(windows_tw(&ev, 0.0), Err(BaselineError::BadParameter(_))));
        assert!(matches!(windows_swtw(&ev, 2, -1.0), Err(BaselineError::BadParameter(_))));
    }

    /// MI straight from the 2x2 indicator table by definition.
    fn brute_mi(seq: &[&str], a: &str, b: &str) -> f64 {
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for w in seq.windows(2) {
            pairs.push((w[0], w[1]));
            pairs.push((w[1], w[0]));
        }
        let n = pairs.len() as f64;
        let mut mi = 0.0;
        for xa in [true, false] {
            for yb in [true, false] {
                let pxy = pairs.iter().filter(|(x, y)| (*x == a) == xa && (*y == b) == yb).count() as f64 / n;
                let px = pairs.iter().filter(|(x, _)| (*x == a) == xa).count() as f64 / n;
                let py = pairs.iter().filter(|(_, y)| (*y == b) == yb).count() as f64 / n;
                if pxy > 0.0 {
                    mi += pxy * (pxy / (px * py)).ln();
                }
            }
        }
        mi
    }

    #[test]
    fn mi_matches_definition_and_ranks_co_occurrence() {
        // A and B always adjacent, C placed independently of them
        let seq = [
            "A", "B", "C", "C", "A", "B", "D", "C", "A", "B", "D", "D", "C", "A", "B", "C", "D", "A", "B", "D",
        ];
        let ev = stream(&seq, 5);
        let t = MiTable::fit(&ev);
        for a in ["A", "B", "C", "D"] {
            for b in ["A", "B", "C", "D"] {
                assert!((t.get(a, b) - brute_mi(&seq, a, b)).abs() < 1e-12, "{a}{b}");
            }
        }
        assert!(t.get("A", "B") > t.get("A", "C"));
    }

    #[test]
    fn swmi_weights_nonnegative() {
        let ev = stream(&["A", "B", "C", "A", "B", "C", "C"], 5);
        let t = MiTable::fit(&ev);
        for w in windows_swmi(&ev, 4, &t).unwrap() {
            assert!(w.weights.iter().all(|&x| x >= 0.0));
            assert_eq!(*w.weights.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn dw_uses_preview_size() {
        let ev = stream(&["A"; 10], 5);
        let ws = windows_dw(&ev, &[None, Some(0), Some(1), None, None, None, None, Some(1), Some(0), None], &[2, 5], 3).unwrap();
        assert_eq!(ws[7].len(), 5);
        assert_eq!(ws[8].len(), 2);
        assert_eq!(ws[9].len(), 3);
    }
}
