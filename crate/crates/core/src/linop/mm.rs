//! Matrix Market (`%%MatrixMarket matrix …`) reading and writing for real
//! matrices in `coordinate` and `array` layout. Indices are 1-based on disk.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::DenseSym;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::MatrixMarket(msg.into())
}

fn parse_header(line: &str) -> Result<(Layout, Symmetry)> {
    let lower = line.to_ascii_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(bad(format!("unrecognized header: {line}")));
    }
    let layout = match tokens[2] {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(bad(format!("unsupported layout {other}"))),
    };
    match tokens[3] {
        "real" | "double" | "integer" => {}
        other => return Err(bad(format!("unsupported field {other}"))),
    }
    let symmetry = match tokens[4] {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(bad(format!("unsupported symmetry {other}"))),
    };
    Ok((layout, symmetry))
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| bad(format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(format!("invalid {what}")))
}

/// Reads any real matrix; symmetric storage is mirrored into a full matrix.
pub fn read_matrix<R: BufRead>(reader: R) -> Result<DMatrix<f64>> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| bad("empty input"))??;
    let (layout, symmetry) = parse_header(&header)?;
    let mut data_lines = lines.filter_map(|l| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('%') => None,
        other => Some(other),
    });
    let size = data_lines.next().ok_or_else(|| bad("missing size line"))??;
    let mut it = size.split_whitespace();
    let nrows: usize = parse(it.next(), "row count")?;
    let ncols: usize = parse(it.next(), "column count")?;
    if symmetry == Symmetry::Symmetric && nrows != ncols {
        return Err(bad("symmetric matrix must be square"));
    }
    let mut m = DMatrix::<f64>::zeros(nrows, ncols);
    match layout {
        Layout::Coordinate => {
            let nnz: usize = parse(it.next(), "entry count")?;
            for k in 0..nnz {
                let line = data_lines
                    .next()
                    .ok_or_else(|| bad(format!("expected {nnz} entries, found {k}")))??;
                let mut t = line.split_whitespace();
                let i: usize = parse(t.next(), "row index")?;
                let j: usize = parse(t.next(), "column index")?;
                let v: f64 = parse(t.next(), "value")?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(bad(format!("index ({i}, {j}) out of range")));
                }
                m[(i - 1, j - 1)] += v;
                if symmetry == Symmetry::Symmetric && i != j {
                    m[(j - 1, i - 1)] += v;
                }
            }
        }
        Layout::Array => {
            // Column-major; symmetric stores the lower triangle only.
            for j in 0..ncols {
                let start = if symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in start..nrows {
                    let line = data_lines.next().ok_or_else(|| bad("truncated array data"))??;
                    let v: f64 = parse(line.split_whitespace().next(), "value")?;
                    m[(i, j)] = v;
                    if symmetry == Symmetry::Symmetric {
                        m[(j, i)] = v;
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Reads a symmetric matrix. General storage is accepted when it is
/// symmetric to `1e-12` relative.
pub fn read_sym<R: BufRead>(reader: R) -> Result<DenseSym> {
    DenseSym::from_matrix_checked(read_matrix(reader)?, 1e-12)
}

pub fn read_sym_file(path: impl AsRef<Path>) -> Result<DenseSym> {
    read_sym(BufReader::new(File::open(path)?))
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix(BufReader::new(File::open(path)?))
}

/// Writes the lower triangle of `a` in `coordinate real symmetric` form,
/// skipping exact zeros.
pub fn write_sym_coordinate<W: Write>(mut w: W, a: &DenseSym) -> Result<()> {
    let n = a.dim();
    let mut entries = Vec::new();
    for j in 0..n {
        for i in j..n {
            let v = a.get(i, j);
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{n} {n} {}", entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Writes the lower triangle of `a` in `array real symmetric` form.
pub fn write_sym_array<W: Write>(mut w: W, a: &DenseSym) -> Result<()> {
    let n = a.dim();
    writeln!(w, "%%MatrixMarket matrix array real symmetric")?;
    writeln!(w, "{n} {n}")?;
    for j in 0..n {
        for i in j..n {
            writeln!(w, "{:e}", a.get(i, j))?;
        }
    }
    Ok(())
}

/// Writes the nonzeros of a general matrix in `coordinate real general` form.
pub fn write_general_coordinate<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {nnz}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}

/// Writes a general matrix (or a vector as `n × 1`) in `array real general`
/// form.
pub fn write_general_array<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

pub fn write_sym_file(path: impl AsRef<Path>, a: &DenseSym) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sym_coordinate(&mut w, a)?;
    w.flush()?;
    Ok(())
}

pub fn write_general_file(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_general_coordinate(&mut w, m)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "%%MatrixMarket matrix coordinate real symmetric
% a comment
3 3 4
1 1 4.0
2 1 1.0
2 2 3.0
3 3 2.5
";

    #[test]
    fn reads_symmetric_coordinate() {
        let a = read_sym(SAMPLE.as_bytes()).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.get(2, 2), 2.5);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn reads_symmetric_array() {
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n1.0\n2.0\n5.0\n";
        let a = read_sym(text.as_bytes()).unwrap();
        assert_eq!(a.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]));
    }

    #[test]
    fn round_trips_both_layouts() {
        let a = read_sym(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_sym_coordinate(&mut buf, &a).unwrap();
        assert_eq!(read_sym(buf.as_slice()).unwrap(), a);
        let mut buf = Vec::new();
        write_sym_array(&mut buf, &a).unwrap();
        assert_eq!(read_sym(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn general_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -2.0, 0.5, 0.0, 3.0]);
        let mut buf = Vec::new();
        write_general_coordinate(&mut buf, &m).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
        let mut buf = Vec::new();
        write_general_array(&mut buf, &m).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_sym("%%MatrixMarket matrix coordinate complex symmetric\n1 1 0\n".as_bytes()).is_err());
        assert!(read_sym("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1.0\n".as_bytes()).is_err());
        assert!(read_sym("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 1.0\n".as_bytes()).is_err());
    }
}
