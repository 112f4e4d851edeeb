use std::path::Path;

use super::{DiscreteDomain, PedagogyState};
use crate::error::{Error, Result};

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::data(path, e.to_string())
}

/// Writes the domain as `concept,prior,<example...>` rows of 0/1 flags.
pub fn write_domain_csv(domain: &DiscreteDomain, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["concept".to_string(), "prior".to_string()];
    header.extend(domain.examples.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (c, row) in domain.consistent.iter().enumerate() {
        let mut rec = vec![domain.concepts[c].clone(), domain.prior[c].to_string()];
        rec.extend(row.iter().map(|&m| u8::from(m).to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_domain_csv(path: &Path) -> Result<DiscreteDomain> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 3 || &header[0] != "concept" || &header[1] != "prior" {
        return Err(Error::data(path, "header must be `concept,prior,<examples...>`"));
    }
    let examples: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let (mut concepts, mut prior, mut consistent) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| Error::data(path, format!("row {}: bad {what}", line + 1));
        concepts.push(rec.get(0).ok_or_else(|| bad("concept"))?.to_string());
        prior.push(rec.get(1).and_then(|p| p.trim().parse::<f64>().ok()).ok_or_else(|| bad("prior"))?);
        let row = rec
            .iter()
            .skip(2)
            .map(|v| match v.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad("flag")),
            })
            .collect::<Result<Vec<bool>>>()?;
        consistent.push(row);
    }
    DiscreteDomain::new(concepts, examples, consistent, prior).map_err(|e| Error::data(path, e.to_string()))
}

/// Writes `teacher.csv` (concept rows) and `student.csv` (example rows
/// with an `undefined` flag) into `dir`.
pub fn write_state_csv(state: &PedagogyState, domain: &DiscreteDomain, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("teacher.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut header = vec!["concept".to_string()];
    header.extend(domain.examples.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for (c, row) in state.teacher.iter().enumerate() {
        let mut rec = vec![domain.concepts[c].clone()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("student.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut header = vec!["example".to_string(), "undefined".to_string()];
    header.extend(domain.concepts.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for (e, row) in state.student.probs.iter().enumerate() {
        let mut rec = vec![domain.examples[e].clone(), state.student.undefined[e].to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
