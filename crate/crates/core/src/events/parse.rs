use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{Annotation, EventsError, LabeledStream, Marker, SensorEvent};

/// How `parse_stream` treats bad input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// Any malformed line or unpaired annotation aborts.
    #[default]
    Strict,
    /// Malformed lines are counted and skipped; unpaired annotations are
    /// counted and stripped.
    Lenient,
}

const TS_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.f";

/// Parses a `YYYY-MM-DD` date and `HH:MM:SS[.ffffff]` time.
pub fn parse_timestamp(date: &str, time: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(&format!("{date} {time}"), TS_FORMAT).ok()
}

/// Formats a timestamp as `YYYY-MM-DD HH:MM:SS[.ffffff]`; the fraction is
/// omitted when zero.
pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    let nanos = ts.nanosecond();
    if nanos == 0 {
        ts.format("%Y-%m-%d %H:%M:%S").to_string()
    } else if nanos % 1000 == 0 {
        ts.format("%Y-%m-%d %H:%M:%S%.6f").to_string()
    } else {
        ts.format("%Y-%m-%d %H:%M:%S%.9f").to_string()
    }
}

pub(crate) fn format_event(e: &SensorEvent) -> String {
    let mut line = format!("{} {} {}", format_timestamp(&e.timestamp), e.sensor_id, e.value);
    if let Some(a) = &e.annotation {
        let m = match a.marker {
            Marker::Begin => "begin",
            Marker::End => "end",
        };
        line.push(' ');
        line.push_str(&a.activity);
        line.push(' ');
        line.push_str(m);
    }
    line
}

fn parse_line(line: &str, lineno: usize) -> Result<SensorEvent, EventsError> {
    let bad = |reason: &str| EventsError::MalformedLine {
        line: lineno,
        reason: reason.to_owned(),
    };
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 4 && tok.len() != 6 {
        return Err(bad("expected 4 or 6 whitespace-separated fields"));
    }
    let timestamp = parse_timestamp(tok[0], tok[1]).ok_or_else(|| bad("unparseable date/time"))?;
    let annotation = if tok.len() == 6 {
        let marker = match tok[5].to_ascii_lowercase().as_str() {
            "begin" => Marker::Begin,
            "end" => Marker::End,
            _ => return Err(bad("annotation marker must be 'begin' or 'end'")),
        };
        Some(Annotation {
            activity: tok[4].to_owned(),
            marker,
        })
    } else {
        None
    };
    Ok(SensorEvent {
        timestamp,
        sensor_id: tok[2].to_owned(),
        value: tok[3].to_owned(),
        annotation,
    })
}

/// Parses one event line; `lineno` only labels errors.
pub fn parse_event(line: &str, lineno: usize) -> Result<SensorEvent, EventsError> {
    parse_line(line, lineno)
}

/// Parses CASAS-style lines: `date time sensor value [activity begin|end]`.
/// Blank lines are ignored. Line numbers in errors are 1-based.
pub fn parse_stream<I, S>(lines: I, strictness: Strictness) -> Result<LabeledStream, EventsError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut events = Vec::new();
    let mut skipped = 0;
    for (i, line) in lines.into_iter().enumerate() {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, i + 1) {
            Ok(e) => events.push(e),
            Err(e) if strictness == Strictness::Strict => return Err(e),
            Err(_) => skipped += 1,
        }
    }
    let mut stream = LabeledStream::from_events_with(events, strictness)?;
    stream.skipped_lines = skipped;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_pair() {
        let s = parse_stream(
            [
                "2011-06-15 08:01:00 M007 ON Meal_Preparation begin",
                "2011-06-15 08:14:02 M007 OFF Meal_Preparation end",
            ],
            Strictness::Strict,
        )
        .unwrap();
        assert_eq!(s.events.len(), 2);
        assert_eq!(s.episodes.len(), 1);
        assert_eq!((s.episodes[0].begin, s.episodes[0].end), (0, 1));
    }

    #[test]
    fn empty_input() {
        let s = parse_stream(Vec::<String>::new(), Strictness::Strict).unwrap();
        assert!(s.events.is_empty());
        assert!(s.episodes.is_empty());
    }

    #[test]
    fn nested_fixture_has_two_episodes() {
        // 20 lines: Meal_Preparation spans 2..=17, Take_Medicine 8..=11 inside it
        let mut lines = Vec::new();
        for i in 0..20 {
            let ann = match i {
                2 => " Meal_Preparation begin",
                8 => " Take_Medicine begin",
                11 => " Take_Medicine end",
                17 => " Meal_Preparation end",
                _ => "",
            };
            let sensor = if (8..=11).contains(&i) { "D005" } else { "M007" };
            let value = if i % 2 == 0 { "ON" } else { "OFF" };
            lines.push(format!("2011-06-15 08:{:02}:00 {sensor} {value}{ann}", i));
        }
        let s = parse_stream(&lines, Strictness::Strict).unwrap();
        assert_eq!(s.events.len(), 20);
        assert_eq!(s.episodes.len(), 2);
        assert_eq!(s.max_depth(), 2);
        assert_eq!(s.episodes[0].class, "Meal_Preparation");
        assert_eq!((s.episodes[0].begin, s.episodes[0].end), (2, 17));
        assert_eq!((s.episodes[1].begin, s.episodes[1].end), (8, 11));
        assert_eq!(s.episodes[1].parent, Some(0));
    }

    #[test]
    fn strict_and_lenient_malformed() {
        let lines = [
            "2011-06-15 08:01:00 M007 ON",
            "garbage",
            "2011-06-15 08:01:05 M007",
            "2011-06-15 08:01:09 M007 OFF",
        ];
        assert!(matches!(
            parse_stream(lines, Strictness::Strict),
            Err(EventsError::MalformedLine { line: 2, .. })
        ));
        let s = parse_stream(lines, Strictness::Lenient).unwrap();
        assert_eq!(s.events.len(), 2);
        assert_eq!(s.skipped_lines, 2);
    }

    #[test]
    fn unmatched_and_nonmonotonic() {
        assert!(matches!(
            parse_stream(["2011-06-15 08:01:00 M007 ON A begin"], Strictness::Strict),
            Err(EventsError::UnmatchedAnnotation { .. })
        ));
        assert!(matches!(
            parse_stream(["2011-06-15 08:01:00 M007 ON A end"], Strictness::Strict),
            Err(EventsError::UnmatchedAnnotation { .. })
        ));
        assert_eq!(
            parse_stream(
                ["2011-06-15 08:01:00 M007 ON", "2011-06-15 08:00:59 M007 OFF"],
                Strictness::Lenient
            ),
            Err(EventsError::NonMonotonicTimestamp { index: 1 })
        );
    }

    #[test]
    fn fractional_seconds_survive() {
        let line = "2011-06-15 08:01:00.123456 M007 ON";
        let s = parse_stream([line], Strictness::Strict).unwrap();
        assert_eq!(s.to_text().trim_end(), line);
    }

    fn arb_event_lines() -> impl Strategy<Value = Vec<String>> {
        let ev = (0u32..86_400, 0u32..1_000_000, 0usize..4, any::<bool>());
        proptest::collection::vec(ev, 0..30).prop_map(|mut evs| {
            evs.sort();
            let mut lines = Vec::new();
            for (k, (secs, micros, sensor, on)) in evs.into_iter().enumerate() {
                let frac = if k % 3 == 0 { String::new() } else { format!(".{micros:06}") };
                lines.push(format!(
                    "2011-06-15 {:02}:{:02}:{:02}{frac} M00{sensor} {}",
                    secs / 3600,
                    secs / 60 % 60,
                    secs % 60,
                    if on { "ON" } else { "OFF" }
                ));
            }
            // keep it monotone even when the fraction sorts differently
            lines.sort();
            lines
        })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(lines in arb_event_lines()) {
            let s = parse_stream(&lines, Strictness::Strict).unwrap();
            let again = parse_stream(s.to_text().lines(), Strictness::Strict).unwrap();
            prop_assert_eq!(&s.events, &again.events);
            let text: Vec<String> = s.to_text().lines().map(str::to_owned).collect();
            // trailing zeros in a fraction are the only allowed textual change
            prop_assert_eq!(text.len(), lines.len());
        }
    }
}
