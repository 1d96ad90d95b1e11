//! Binary and CSV matrix files.
//!
//! Square co-occurrence matrices use the `JSMFCOOC` layout: 8-byte magic,
//! `u64` dimension `N`, then `N²` little-endian `f64` values in row-major
//! order. Rectangular matrices (`B`, `Θ`, `A`) use `JSMFMATX`: magic, `u64`
//! rows, `u64` columns, then row-major little-endian `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const COOC_MAGIC: &[u8; 8] = b"JSMFCOOC";
pub const MATRIX_MAGIC: &[u8; 8] = b"JSMFMATX";

fn write_values<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_values<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("dimensions {rows}×{cols} overflow")))?;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("truncated payload: expected {len} values")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after matrix payload".into()));
    }
    Ok(DMatrix::from_row_iterator(
        rows,
        cols,
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))),
    ))
}

/// Writes a square matrix in the `JSMFCOOC` layout.
pub fn write_cooc(path: &Path, c: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "co-occurrence matrix must be square, got {}×{}",
            c.nrows(),
            c.ncols()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(COOC_MAGIC).map_err(io)?;
    w.write_all(&(c.nrows() as u64).to_le_bytes()).map_err(io)?;
    write_values(&mut w, c).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_cooc(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: file too short", path.display())))?;
    if &magic != COOC_MAGIC {
        return Err(Error::Format(format!("{}: bad magic, expected JSMFCOOC", path.display())));
    }
    let n = read_u64(&mut r).map_err(|_| Error::Format("missing dimension".into()))? as usize;
    read_values(&mut r, n, n)
}

/// Writes any matrix in the `JSMFMATX` layout.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MATRIX_MAGIC).map_err(io)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.ncols() as u64).to_le_bytes()).map_err(io)?;
    write_values(&mut w, m).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: file too short", path.display())))?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format(format!("{}: bad magic, expected JSMFMATX", path.display())));
    }
    let rows = read_u64(&mut r).map_err(|_| Error::Format("missing row count".into()))? as usize;
    let cols = read_u64(&mut r).map_err(|_| Error::Format("missing column count".into()))? as usize;
    read_values(&mut r, rows, cols)
}

/// Comma-separated rows, full round-trip precision.
pub fn write_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(path, i + 1, "ragged row"));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cooc_layout_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 0.25, 0.5, 1.0]);
        write_cooc(&p, &c).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"JSMFCOOC");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 4 * 8);
        // row-major: second value is C[0,1]
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 0.25);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 0.5);
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"JSMFCOOC\x02\0\0\0\0\0\0\0abc").unwrap();
        assert!(matches!(read_cooc(&p), Err(Error::Format(_))));
        std::fs::write(&p, b"NOTMAGIC").unwrap();
        assert!(matches!(read_cooc(&p), Err(Error::Format(_))));
        assert!(matches!(read_matrix(&p), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let mut s = seed;
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            });
            let pb = dir.path().join("m.bin");
            write_matrix(&pb, &m).unwrap();
            prop_assert_eq!(read_matrix(&pb).unwrap(), m.clone());
            let pc = dir.path().join("m.csv");
            write_csv(&pc, &m).unwrap();
            prop_assert_eq!(read_csv(&pc).unwrap(), m.clone());
            if rows == cols {
                let pq = dir.path().join("c.bin");
                write_cooc(&pq, &m).unwrap();
                prop_assert_eq!(read_cooc(&pq).unwrap(), m);
            }
        }
    }
}
