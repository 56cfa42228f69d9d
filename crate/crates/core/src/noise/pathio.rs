//! Persisted mode paths: one JSON header line, then row-major little-endian
//! `f64` rows, one row of `K` coefficients per time step.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::FieldPath;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathHeader {
    pub dimension: usize,
    #[serde(rename = "K")]
    pub modes: usize,
    pub n: u32,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub generator: String,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<u64>,
}

pub fn write_path(file: &Path, header: &PathHeader, path: &FieldPath) -> Result<()> {
    if header.rows != path.len() {
        return Err(Error::Format(format!(
            "header declares {} rows, path has {}",
            header.rows,
            path.len()
        )));
    }
    let mut w = BufWriter::new(File::create(file)?);
    let json = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    for f in path.fields() {
        if f.len() != header.modes {
            return Err(Error::Format("row length differs from K".into()));
        }
        for c in f.coeffs() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Header and coefficient rows of a persisted path.
pub fn read_path(file: &Path) -> Result<(PathHeader, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(file)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let header: PathHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != header.rows * header.modes * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of data, found {}",
            header.rows * header.modes * 8,
            bytes.len()
        )));
    }
    let rows = bytes
        .chunks_exact(8 * header.modes.max(1))
        .take(header.rows)
        .map(|row| {
            row.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        })
        .collect();
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{Field, SpectralBasis};

    #[test]
    fn round_trip() {
        let b = SpectralBasis::new(2, 5).unwrap();
        let fields = (0..4)
            .map(|m| {
                Field::from_coeffs(&b, (0..5).map(|k| (m * 5 + k) as f64 * 0.1).collect()).unwrap()
            })
            .collect();
        let path = FieldPath::new(0.0, 0.25, fields).unwrap();
        let header = PathHeader {
            dimension: 2,
            modes: 5,
            n: 4,
            dt: 0.25,
            horizon: 0.75,
            seed: 9,
            generator: super::super::GENERATOR_ID.into(),
            rows: 4,
            name: Some("psi".into()),
            replica: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.bin");
        write_path(&f, &header, &path).unwrap();
        let (h, rows) = read_path(&f).unwrap();
        assert_eq!(h, header);
        assert_eq!(rows[3], path.get(3).coeffs());
        let raw = std::fs::read(&f).unwrap();
        std::fs::write(&f, &raw[..raw.len() - 3]).unwrap();
        assert!(matches!(read_path(&f), Err(Error::Format(_))));
    }
}
