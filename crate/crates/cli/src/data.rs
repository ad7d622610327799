//! CSV ingestion and emission.

use std::io::{Read, Write};
use std::path::Path;

use npiv_core::Sample;

use crate::error::CliError;

const COLUMNS: [&str; 3] = ["y", "x", "z"];

/// Reads columns `y`, `x`, `z` (located by header name) from a CSV file.
pub fn read_sample(path: &Path) -> Result<Sample, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_sample(file)
}

pub fn parse_sample<R: Read>(input: R) -> Result<Sample, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header row: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(CliError::Data("input is empty (no header row)".into()));
    }

    let mut index = [0usize; 3];
    let mut missing = Vec::new();
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        let found: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match found.as_slice() {
            [i] => *slot = *i,
            [] => missing.push(name),
            _ => return Err(CliError::Data(format!("column {name:?} appears more than once"))),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Data(format!("missing required column(s): {}", missing.join(", "))));
    }

    let mut cols: [Vec<f64>; 3] = Default::default();
    for (row, record) in reader.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| CliError::Data(format!("malformed record at data row {row}: {e}")))?;
        for ((col, &i), name) in cols.iter_mut().zip(&index).zip(COLUMNS) {
            let cell = record.get(i).unwrap_or("");
            let value: f64 = cell
                .parse()
                .map_err(|_| CliError::Data(format!("non-numeric value {cell:?} in column {name} at data row {row}")))?;
            if !value.is_finite() {
                return Err(CliError::Data(format!("non-finite value {cell:?} in column {name} at data row {row}")));
            }
            col.push(value);
        }
    }
    if cols[0].is_empty() {
        return Err(CliError::Data("input has a header but no data rows".into()));
    }
    let [y, x, z] = cols;
    Ok(Sample::new(y, x, z)?)
}

pub fn write_sample<W: Write>(sample: &Sample, out: W) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Config(format!("cannot write CSV: {e}"));
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(COLUMNS).map_err(io)?;
    for i in 0..sample.len() {
        writer
            .write_record([sample.y()[i].to_string(), sample.x()[i].to_string(), sample.z()[i].to_string()])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::Config(format!("cannot write CSV: {e}")))?;
    Ok(())
}
