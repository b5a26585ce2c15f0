//! Log-scale heatmap triplets for external plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

pub const MAX_SIDE: usize = 512;
const FLOOR: f64 = 1e-12;

/// `(row, col, log10(|v| + 1e-12))` over tiles of at most `max_side` per axis.
/// Each tile reports its largest magnitude so isolated nonzeros stay visible.
pub fn triplets(m: &DMatrix<f64>, max_side: usize) -> Vec<(usize, usize, f64)> {
    let tile = |len: usize| len.div_ceil(max_side.max(1)).max(1);
    let (tr, tc) = (tile(m.nrows()), tile(m.ncols()));
    let (rows, cols) = (m.nrows().div_ceil(tr), m.ncols().div_ceil(tc));
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i_end = ((r + 1) * tr).min(m.nrows());
            let j_end = ((c + 1) * tc).min(m.ncols());
            let mut peak = 0.0_f64;
            for j in c * tc..j_end {
                for i in r * tr..i_end {
                    peak = peak.max(m[(i, j)].abs());
                }
            }
            out.push((r, c, (peak + FLOOR).log10()));
        }
    }
    out
}

pub fn save(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "row,col,value")?;
        for (r, c, v) in triplets(m, MAX_SIDE) {
            writeln!(w, "{r},{c},{v}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_matrices_are_not_downsampled() {
        let t = triplets(&DMatrix::identity(3, 3), MAX_SIDE);
        assert_eq!(t.len(), 9);
        assert_eq!(t[0], (0, 0, (1.0 + FLOOR).log10()));
        assert_eq!(t[1].2, -12.0);
    }

    #[test]
    fn large_matrices_fit_the_cap() {
        let m = DMatrix::from_fn(1030, 700, |i, j| if i == 1029 && j == 3 { 5.0 } else { 0.0 });
        let t = triplets(&m, MAX_SIDE);
        let rows = t.iter().map(|e| e.0).max().unwrap() + 1;
        let cols = t.iter().map(|e| e.1).max().unwrap() + 1;
        assert!(rows <= MAX_SIDE && cols <= MAX_SIDE);
        assert_eq!(rows, 344);
        assert_eq!(cols, 350);
        let hot: Vec<_> = t.iter().filter(|e| e.2 > 0.0).collect();
        assert_eq!(hot.len(), 1);
        assert_eq!((hot[0].0, hot[0].1), (343, 1));
    }
}
