//! Dataset CSV ingestion.
//!
//! The file has a `dose,n,y` header and one dose group per row, with doses
//! in original units. Rows may appear in any order.

use std::io::Read;
use std::path::Path;

use bayes_bmd::DoseResponseDataset;

use crate::error::CliError;

#[derive(Debug, serde::Deserialize)]
struct Row {
    dose: f64,
    n: u64,
    y: u64,
}

pub fn load_dataset(path: &Path, unit: &str) -> Result<DoseResponseDataset, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Dataset(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset(file, unit)
        .map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))
}

/// Parses and validates CSV text; errors name the offending line.
pub fn parse_dataset<R: Read>(input: R, unit: &str) -> Result<DoseResponseDataset, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["dose", "n", "y"] {
        return Err(format!("line 1: expected header \"dose,n,y\", found \"{}\"", names.join(",")));
    }
    let mut rows: Vec<(u64, Row)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            format!("line {line}: {e}")
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| format!("line {line}: {e}"))?;
        if !(row.dose.is_finite() && row.dose >= 0.0) {
            return Err(format!("line {line}: dose must be finite and nonnegative, got {}", row.dose));
        }
        if row.n == 0 {
            return Err(format!("line {line}: group size n must be positive"));
        }
        if row.y > row.n {
            return Err(format!(
                "line {line}: responders y = {} exceed group size n = {}",
                row.y, row.n
            ));
        }
        rows.push((line, row));
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    rows.sort_by(|a, b| a.1.dose.total_cmp(&b.1.dose));
    for w in rows.windows(2) {
        if w[0].1.dose == w[1].1.dose {
            return Err(format!(
                "line {}: duplicate dose {} (also on line {})",
                w[1].0, w[1].1.dose, w[0].0
            ));
        }
    }
    if rows[0].1.dose != 0.0 {
        return Err(format!(
            "missing zero-dose control group (lowest dose is {} on line {})",
            rows[0].1.dose, rows[0].0
        ));
    }
    let doses = rows.iter().map(|r| r.1.dose).collect();
    let n = rows.iter().map(|r| r.1.n).collect();
    let y = rows.iter().map(|r| r.1.y).collect();
    DoseResponseDataset::new(doses, n, y, unit).map_err(|e| e.to_string())
}
