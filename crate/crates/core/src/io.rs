//! CSV ingestion with listwise deletion of incomplete rows.

use std::path::Path;

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};

/// Cell values treated as missing.
pub const MISSING_TOKENS: [&str; 3] = ["", "NA", "."];

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: ResponseMatrix,
    pub items: Vec<String>,
    pub rows_read: usize,
    /// Rows dropped because some cell was missing.
    pub excluded: usize,
}

/// Read a header row of item names followed by 0/1 cells. Rows with any
/// missing cell are dropped.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Ingested> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file)
}

pub fn ingest_reader<R: std::io::Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let items: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Io(format!("cannot read header: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let p = items.len();
    if p < 2 {
        return Err(Error::Data("at least two item columns are required".into()));
    }
    let mut data = Vec::new();
    let mut rows_read = 0;
    let mut excluded = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Ingest {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        rows_read += 1;
        let mut parsed = Vec::with_capacity(p);
        let mut missing = false;
        for (cell, name) in rec.iter().zip(&items) {
            if MISSING_TOKENS.contains(&cell) {
                missing = true;
                continue;
            }
            match cell {
                "0" => parsed.push(0u8),
                "1" => parsed.push(1u8),
                other => {
                    return Err(Error::Ingest {
                        row,
                        column: name.clone(),
                        message: format!("value '{other}' is not 0, 1 or NA"),
                    })
                }
            }
        }
        if missing {
            excluded += 1;
        } else {
            data.extend(parsed);
        }
    }
    let n = data.len() / p;
    if n == 0 {
        return Err(Error::Data(format!(
            "no complete rows left after excluding {excluded} of {rows_read}"
        )));
    }
    Ok(Ingested {
        data: ResponseMatrix::new(n, p, data)?,
        items,
        rows_read,
        excluded,
    })
}
