//! CSV/JSON plumbing shared by the file interfaces.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ItemId;

/// Format a real with 17 significant digits, enough for an exact round trip.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Render rows as CSV text with a header.
pub fn csv_string<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parsed CSV of the form `item_id,<col>,<col>,...` with numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub ids: Vec<ItemId>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::parse(origin, e.to_string()))?
            .clone();
        if header.get(0) != Some("item_id") {
            return Err(Error::parse(origin, "first column must be item_id"));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
            let row_no = line + 2;
            let id = ItemId::new(&rec[0]);
            if !seen.insert(id.clone()) {
                return Err(Error::parse(origin, format!("line {row_no}: duplicate item_id {id}")));
            }
            let mut row = Vec::with_capacity(columns.len());
            for (c, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::parse(
                        origin,
                        format!("line {row_no}, column {}: not a number: {field:?}", columns[c]),
                    )
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(origin, format!("line {row_no}: non-finite value")));
                }
                row.push(v);
            }
            ids.push(id);
            rows.push(row);
        }
        Ok(NumericTable { columns, ids, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}
