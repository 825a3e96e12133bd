//! CSV output: header row, comma separated, LF line endings, numbers in the
//! shortest form that parses back to the same `f64`.

use std::io::{Read, Write};

use erg_core::Trace;

use crate::CliError;

/// Shortest round-trip decimal; exponent notation outside `[1e-5, 1e16)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

pub fn write_rows<W: Write>(out: W, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| format_number(x)))?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: "<output>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn write_trace<W: Write>(out: W, trace: &Trace) -> Result<(), CliError> {
    write_rows(out, &trace.columns, &trace.rows)
}

/// Reads a numeric CSV with a header row.
pub fn read_table<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().map(String::from).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                parse_number(field).ok_or_else(|| CliError::Invalid {
                    origin: "<csv>".into(),
                    field: format!("row {} column {}", i + 2, header.get(j).map_or("?", String::as_str)),
                    message: format!("`{field}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
