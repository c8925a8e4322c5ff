//! Space-time field files.
//!
//! A field is stored as a JSON header plus a data file next to it:
//!
//! * `<stem>.json` holds `d`, `n_x`, `n_t`, `t_end`, `format`, `byte_order`
//!   and `layout`;
//! * `<stem>.bin` holds raw IEEE-754 `f64` values in little-endian byte
//!   order, time-major with the first spatial axis fastest; or
//! * `<stem>.csv` holds one row per node, `x1[,x2],t,u`, in the same order,
//!   with 17 significant digits so the round trip is lossless.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Grid, GridSpec, SpaceTimeField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldFormat {
    Binary,
    Csv,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    grid: GridSpec,
    format: FieldFormat,
    byte_order: String,
    layout: String,
}

const LAYOUT: &str = "time-major, first spatial axis fastest";

fn data_path(stem: &Path, format: FieldFormat) -> PathBuf {
    stem.with_extension(match format {
        FieldFormat::Binary => "bin",
        FieldFormat::Csv => "csv",
    })
}

/// Writes `<stem>.json` and the data file; returns the header path.
pub fn save_spacetime(u: &SpaceTimeField, stem: &Path, format: FieldFormat) -> Result<PathBuf> {
    let grid = u.grid();
    let header = Header {
        grid: (*grid).into(),
        format,
        byte_order: "little-endian".into(),
        layout: LAYOUT.into(),
    };
    let header_path = stem.with_extension("json");
    fs::write(&header_path, serde_json::to_string_pretty(&header)?)?;
    let data = data_path(stem, format);
    match format {
        FieldFormat::Binary => {
            let mut bytes = Vec::with_capacity(8 * u.values().len());
            for v in u.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(data, bytes)?;
        }
        FieldFormat::Csv => {
            let mut w = BufWriter::new(fs::File::create(data)?);
            let cols: &[&str] = if grid.dim() == 1 { &["x1", "t", "u"] } else { &["x1", "x2", "t", "u"] };
            writeln!(w, "{}", cols.join(","))?;
            let n_s = grid.n_space();
            for (n, v) in u.values().iter().enumerate() {
                let (k, idx) = (n / n_s, n % n_s);
                let x = grid.node_coords(idx);
                for c in &x[..grid.dim()] {
                    write!(w, "{c:.16e},")?;
                }
                writeln!(w, "{:.16e},{:.16e}", grid.t_coord(k), v)?;
            }
            w.flush()?;
        }
    }
    Ok(header_path)
}

/// Reads a field written by [`save_spacetime`]; `stem` may carry any extension.
pub fn load_spacetime(stem: &Path) -> Result<SpaceTimeField> {
    let header: Header = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let grid = Grid::try_from(header.grid)?;
    let n = grid.n_space() * grid.n_t();
    let data = data_path(stem, header.format);
    let values = match header.format {
        FieldFormat::Binary => {
            if header.byte_order != "little-endian" {
                return Err(Error::Schema(format!("unsupported byte order {}", header.byte_order)));
            }
            let bytes = fs::read(data)?;
            if bytes.len() != 8 * n {
                return Err(Error::Schema(format!("expected {} bytes, found {}", 8 * n, bytes.len())));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        }
        FieldFormat::Csv => {
            let mut rdr = csv::Reader::from_path(data)?;
            let width = grid.dim() + 2;
            let mut values = Vec::with_capacity(n);
            for rec in rdr.records() {
                let rec = rec?;
                if rec.len() != width {
                    return Err(Error::Schema(format!("expected {width} columns, found {}", rec.len())));
                }
                let v: f64 = rec[width - 1]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Schema(format!("bad value {:?}: {e}", &rec[width - 1])))?;
                values.push(v);
            }
            values
        }
    };
    SpaceTimeField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_and_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 5, 4, 0.7).unwrap();
        let u = SpaceTimeField::from_fn(g, |x, t| (x[0] * 1.1).exp() + x[1] / 3.0 - t.sin());
        for fmt in [FieldFormat::Binary, FieldFormat::Csv] {
            let stem = dir.path().join(format!("u_{fmt:?}"));
            save_spacetime(&u, &stem, fmt).unwrap();
            assert_eq!(load_spacetime(&stem).unwrap(), u);
        }
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(1, 5, 3, 1.0).unwrap();
        let stem = dir.path().join("u");
        save_spacetime(&SpaceTimeField::constant(g, 1.0), &stem, FieldFormat::Binary).unwrap();
        let bin = stem.with_extension("bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes.truncate(16);
        fs::write(&bin, bytes).unwrap();
        assert!(matches!(load_spacetime(&stem), Err(Error::Schema(_))));
    }
}
