//! Dense matrix files: a small binary container and plain CSV.
//!
//! Binary layout: `GMRF`, one version byte, rows and columns as u64 LE, then
//! row-major f64 LE values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"GMRF";
pub const VERSION: u8 = 1;

pub fn write_binary(mut w: impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()
}

/// Reads a binary matrix; the error string describes what was malformed.
pub fn read_binary(mut r: impl Read) -> Result<DMatrix<f64>, String> {
    let mut head = [0u8; 21];
    r.read_exact(&mut head).map_err(|e| format!("truncated header: {e}"))?;
    if &head[..4] != MAGIC {
        return Err("bad magic bytes".into());
    }
    if head[4] != VERSION {
        return Err(format!("unsupported version {}", head[4]));
    }
    let rows = u64::from_le_bytes(head[5..13].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[13..21].try_into().unwrap()) as usize;
    let count = rows.checked_mul(cols).ok_or("dimensions overflow")?;
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for k in 0..count {
        r.read_exact(&mut buf).map_err(|_| format!("truncated data at value {k} of {count}"))?;
        values.push(f64::from_le_bytes(buf));
    }
    if r.read(&mut buf).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after matrix data".into());
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Comma-separated rows. `{}` on f64 prints the shortest exact representation.
pub fn write_csv(mut w: impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

pub fn read_csv(r: impl Read) -> Result<DMatrix<f64>, String> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text).map_err(|e| e.to_string())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", k + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if rows.first().is_some_and(|first| first.len() != row.len()) {
            return Err(format!("line {}: ragged row", k + 1));
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

pub fn save(path: &Path, m: &DMatrix<f64>, csv: bool) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let w = BufWriter::new(file);
    if csv {
        write_csv(w, m)
    } else {
        write_binary(w, m)
    }
    .map_err(|e| CliError::io(path, e))
}

/// Loads either format, chosen by the magic bytes.
pub fn load(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut file = BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?);
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    let parsed = if bytes.starts_with(MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        read_csv(bytes.as_slice())
    };
    parsed.map_err(|reason| CliError::Format {
        path: path.to_path_buf(),
        reason,
    })
}
