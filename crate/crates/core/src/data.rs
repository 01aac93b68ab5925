//! Numeric CSV tables with a header row.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Data("column names and columns differ in number".into()));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Data("columns differ in length".into()));
            }
        }
        Ok(Self { names, columns })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("row {}, column `{}`: `{field}` is not numeric", row + 2, names[j]))
                })?;
                columns[j].push(v);
            }
        }
        if columns.first().is_none_or(Vec::is_empty) {
            return Err(Error::Data(format!("{}: no data rows", path.display())));
        }
        Ok(Self { names, columns })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
        w.write_record(&self.names).map_err(|e| Error::Data(e.to_string()))?;
        for i in 0..self.nrows() {
            let row: Vec<String> = self.columns.iter().map(|c| format_float(c[i])).collect();
            w.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("column `{name}` not found")))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
