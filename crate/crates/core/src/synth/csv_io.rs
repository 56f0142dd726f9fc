//! MR table layout: `Time, gNodeBCellID, CallID, S0..S{M-1}, N{q}_B{m}.., x, y, labeled`.
//! Missing beams are written as the token `x`; unknown locations as empty fields.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::MrSample;
use crate::error::{Error, Result};
use crate::units::MISSING_DBM;

const MISSING_TOKEN: &str = "x";

fn header(m: usize, q: usize) -> Vec<String> {
    let mut h = vec!["Time".to_string(), "gNodeBCellID".into(), "CallID".into()];
    h.extend((0..m).map(|b| format!("S{b}")));
    for n in 0..q {
        h.extend((0..m).map(|b| format!("N{n}_B{b}")));
    }
    h.extend(["x".into(), "y".into(), "labeled".into()]);
    h
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse { line, msg: e.to_string() }
}

pub fn write_csv(samples: &[MrSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(samples, file)
}

pub fn write_csv_to(samples: &[MrSample], writer: impl Write) -> Result<()> {
    let (m, q) = samples.first().map(|s| (s.m(), s.neighbor_rsrp.len())).unwrap_or((0, 0));
    for s in samples {
        s.validate()?;
        if s.m() != m || s.neighbor_rsrp.len() != q {
            return Err(Error::dims("all samples must share the beam and neighbor counts"));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(m, q)).map_err(csv_err)?;
    let value = |v: f64, ok: bool| if ok { v.to_string() } else { MISSING_TOKEN.to_string() };
    for s in samples {
        let mut row = vec![s.timestamp.to_string(), s.serving_cell_id.to_string(), s.call_id.to_string()];
        row.extend(s.serving_rsrp.iter().zip(&s.serving_mask).map(|(&v, &ok)| value(v, ok)));
        for (vals, mask) in s.neighbor_rsrp.iter().zip(&s.neighbor_mask) {
            row.extend(vals.iter().zip(mask).map(|(&v, &ok)| value(v, ok)));
        }
        match s.true_location {
            Some((x, y)) => row.extend([x.to_string(), y.to_string()]),
            None => row.extend([String::new(), String::new()]),
        }
        row.push(if s.is_labeled { "1" } else { "0" }.into());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MrSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

/// Parses the header to learn M and Q, then every row.
pub fn read_csv_from(reader: impl Read) -> Result<Vec<MrSample>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let head: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    let m = head.iter().filter(|h| h.starts_with('S') && h[1..].parse::<usize>().is_ok()).count();
    let n_cols = head.len();
    if n_cols < 6 || m == 0 || (n_cols - 6 - m) % m != 0 {
        return Err(Error::Parse { line: 1, msg: format!("unrecognized header with {n_cols} columns") });
    }
    let q = (n_cols - 6 - m) / m;
    if head != header(m, q) {
        return Err(Error::Parse { line: 1, msg: "header does not match the MR column layout".into() });
    }

    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| Error::Parse { line, msg };
        let num = |i: usize| -> Result<f64> {
            let f = rec[i].trim();
            f.parse::<f64>().map_err(|_| bad(format!("column `{}`: expected a number, got `{f}`", head[i])))
        };
        let int = |i: usize| -> Result<u64> {
            let f = rec[i].trim();
            f.parse::<u64>().map_err(|_| bad(format!("column `{}`: expected an integer, got `{f}`", head[i])))
        };
        let beam = |i: usize| -> Result<(f64, bool)> {
            if rec[i].trim() == MISSING_TOKEN {
                return Ok((MISSING_DBM, false));
            }
            let v = num(i)?;
            if !v.is_finite() {
                return Err(bad(format!("column `{}`: non-finite power", head[i])));
            }
            Ok(if v <= MISSING_DBM { (MISSING_DBM, false) } else { (v, true) })
        };

        let (serving_rsrp, serving_mask): (Vec<f64>, Vec<bool>) = (3..3 + m).map(beam).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let mut neighbor_rsrp = Vec::with_capacity(q);
        let mut neighbor_mask = Vec::with_capacity(q);
        for n in 0..q {
            let start = 3 + m + n * m;
            let (v, k): (Vec<f64>, Vec<bool>) = (start..start + m).map(beam).collect::<Result<Vec<_>>>()?.into_iter().unzip();
            neighbor_rsrp.push(v);
            neighbor_mask.push(k);
        }
        let (xi, yi) = (n_cols - 3, n_cols - 2);
        let true_location = match (rec[xi].trim().is_empty(), rec[yi].trim().is_empty()) {
            (true, true) => None,
            (false, false) => Some((num(xi)?, num(yi)?)),
            _ => return Err(bad("location needs both x and y or neither".into())),
        };
        let is_labeled = match rec[n_cols - 1].trim() {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("labeled flag must be 0 or 1, got `{other}`"))),
        };
        if is_labeled && true_location.is_none() {
            return Err(bad("labeled sample without a location".into()));
        }
        let sample = MrSample {
            timestamp: num(0)?,
            serving_cell_id: int(1)?,
            call_id: int(2)?,
            serving_rsrp,
            serving_mask,
            neighbor_rsrp,
            neighbor_mask,
            true_location,
            is_labeled,
        };
        sample.validate().map_err(|e| bad(e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}
