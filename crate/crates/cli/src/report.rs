//! Output artifacts: run manifest, JSON envelope, CSV tables and plain text.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Command line as invoked.
    pub argv: Vec<String>,
    /// Fully resolved parameters, including defaults.
    pub params: Value,
    pub seed: u64,
    pub version: String,
    pub wall_time_secs: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a> {
    pub manifest: &'a RunManifest,
    pub result: &'a Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Outcome of one command before formatting.
#[derive(Debug, Clone)]
pub struct Report {
    pub params: Value,
    pub result: Value,
    pub text: String,
    pub table: Table,
    pub exit: i32,
}

/// Shortest round-tripping representation, as used in CSV cells.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn vector(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|c| format!("{c:.6}")).collect();
    format!("({})", items.join(", "))
}

pub fn envelope_json(manifest: &RunManifest, result: &Value) -> String {
    serde_json::to_string_pretty(&Envelope { manifest, result }).expect("JSON values always serialize")
}

/// Writes the artifact to `path`; CSV artifacts get their manifest in a
/// sibling `<path>.manifest.json`.
pub fn write_artifact(path: &Path, csv: bool, manifest: &RunManifest, report: &Report) -> std::io::Result<()> {
    if csv {
        let file = std::fs::File::create(path)?;
        report.table.write_csv(file).map_err(std::io::Error::other)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".manifest.json");
        std::fs::write(side, serde_json::to_string_pretty(manifest).expect("manifest serializes"))
    } else {
        std::fs::write(path, envelope_json(manifest, &report.result))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_table_round_trips() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![num(0.1), num(-2.0)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "a,b\n0.1,-2.0\n");
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let row: Vec<f64> = r.records().next().unwrap().unwrap().iter().map(|c| c.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, -2.0]);
    }

    #[test]
    fn vector_formatting() {
        assert_eq!(vector(&[1.0, -0.5]), "(1.000000, -0.500000)");
    }
}
