//! CSV output shared by the report types.

use std::io;

use csv::WriterBuilder;

/// Writes a header plus rows as comma-separated text.
pub(crate) fn write_csv<W: io::Write>(out: W, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

pub(crate) fn to_csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, header, rows).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Shortest decimal that round-trips; `-inf`/`inf`/`nan` spelled out.
pub(crate) fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
