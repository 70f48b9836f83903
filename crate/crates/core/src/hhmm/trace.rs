use super::engine::Segment;
use super::{HhmmError, HhmmModel};
use crate::report::{num, to_csv_string};

/// Per-event class log-likelihoods of one segment as CSV: `event_index`,
/// one column per class in id order, then `argmax` (a class name).
pub fn likelihood_trace(model: &HhmmModel, segment: &Segment) -> Result<String, HhmmError> {
    if segment.trace.is_empty() {
        return Err(HhmmError::EmptyTrace);
    }
    let mut header = vec!["event_index".to_owned()];
    header.extend(model.classes.iter().map(|c| c.name.clone()));
    header.push("argmax".into());
    let rows: Vec<Vec<String>> = segment
        .trace
        .iter()
        .map(|r| {
            let mut row = vec![r.index.to_string()];
            row.extend(r.log_likelihoods.iter().map(|&x| num(x)));
            row.push(model.class_name(r.argmax).to_owned());
            row
        })
        .collect();
    Ok(to_csv_string(&header, &rows))
}
