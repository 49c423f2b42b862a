//! Name-frequency tables from delimited text.

use std::path::Path;

use microclust_core::names::FrequencyTable;
use microclust_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    #[default]
    Counts,
    Proportions,
}

/// How to read one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableFormat {
    pub delimiter: char,
    pub has_header: bool,
    /// Column header, or zero-based index when there is no header.
    pub name_column: String,
    pub value_column: String,
    pub kind: ValueKind,
    /// Population the counts were drawn from, if the table is truncated.
    pub population: Option<u64>,
}

impl Default for TableFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            has_header: true,
            name_column: "name".into(),
            value_column: "count".into(),
            kind: ValueKind::Counts,
            population: None,
        }
    }
}

fn column_index(headers: Option<&csv::StringRecord>, column: &str, path: &Path) -> Result<usize> {
    match headers {
        Some(h) => h.iter().position(|c| c.trim() == column).ok_or_else(|| {
            CliError::data(path, format!("no column named {column:?} in header"))
        }),
        None => column.parse().map_err(|_| {
            CliError::data(
                path,
                format!("column {column:?} must be an index when the file has no header"),
            )
        }),
    }
}

/// Reads a table; every failure names the file and, where there is one, the
/// offending line.
pub fn load_frequency_table(path: &Path, format: &TableFormat) -> Result<FrequencyTable> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_frequency_table(file, format, path)
}

/// As [`load_frequency_table`] for any reader; `path` labels diagnostics.
pub fn parse_frequency_table<R: std::io::Read>(
    input: R,
    format: &TableFormat,
    path: &Path,
) -> Result<FrequencyTable> {
    if !format.delimiter.is_ascii() {
        return Err(CliError::Usage(format!(
            "delimiter {:?} must be a single ASCII character",
            format.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter as u8)
        .has_headers(format.has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = if format.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| CliError::data(path, e.to_string()))?
                .clone(),
        )
    } else {
        None
    };
    let name_at = column_index(headers.as_ref(), &format.name_column, path)?;
    let value_at = column_index(headers.as_ref(), &format.value_column, path)?;

    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |msg: String| CliError::data(path, format!("line {line}: {msg}"));
        let name = record
            .get(name_at)
            .ok_or_else(|| at(format!("missing column {name_at}")))?;
        let raw = record
            .get(value_at)
            .ok_or_else(|| at(format!("missing column {value_at}")))?;
        let value: f64 = raw
            .replace('_', "")
            .parse()
            .map_err(|_| at(format!("value {raw:?} is not a number")))?;
        if name.is_empty() {
            return Err(at("empty name".into()));
        }
        rows.push((name.to_string(), value));
        lines.push(line);
    }
    let built = match format.kind {
        ValueKind::Counts => FrequencyTable::from_counts(rows, format.population),
        ValueKind::Proportions => FrequencyTable::from_proportions(rows),
    };
    built.map_err(|e| match e {
        CoreError::InvalidEntry { row, reason } => {
            CliError::data(path, format!("line {}: {reason}", lines[row]))
        }
        other => CliError::data(path, other.to_string()),
    })
}
