use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// `sample_index,pred_x,pred_y` rows.
pub fn write_locations_to<W: Write>(locations: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Parse { line: 0, msg: e.to_string() };
    w.write_record(["sample_index", "pred_x", "pred_y"]).map_err(csv_err)?;
    for (i, p) in locations.iter().enumerate() {
        w.write_record([i.to_string(), p.0.to_string(), p.1.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<locations>", e))
}

pub fn write_locations_csv(locations: &[(f64, f64)], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_locations_to(locations, std::io::BufWriter::new(file))
}

pub fn read_locations_from<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != 3 {
            return Err(Error::Parse { line, msg: format!("expected 3 fields, found {}", rec.len()) });
        }
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("field {k}: {e}") })
        };
        let idx = rec[0].trim().parse::<usize>().map_err(|e| Error::Parse { line, msg: format!("sample index: {e}") })?;
        if idx != out.len() {
            return Err(Error::Parse { line, msg: format!("expected sample index {}, found {idx}", out.len()) });
        }
        out.push((num(1)?, num(2)?));
    }
    Ok(out)
}

pub fn read_locations_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_locations_from(std::io::BufReader::new(file))
}
