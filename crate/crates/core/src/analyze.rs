//! Diagnostics on built matrices: exact-zero counts, asymmetry, zero-block
//! patterns and inverse residuals.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::assemble::{BlockLayout, JointPair};
use crate::error::{Error, Result};
use crate::graph::{unordered, FieldPair};
use crate::linalg::max_abs;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    /// Percentage of entries stored as exactly `0.0`.
    pub zero_percent: f64,
    /// `true` where the whole `n x n` block is zero, in block order.
    pub zero_blocks: Vec<Vec<bool>>,
    pub threshold_used: f64,
}

/// Counts literal zeros of `m`, split into `block` x `block` tiles.
pub fn sparsity_percent(m: &DMatrix<f64>, block: usize, threshold_used: f64) -> SparsityReport {
    let total = m.len();
    let zeros = m.iter().filter(|v| **v == 0.0).count();
    let zero_percent = if total == 0 { 100.0 } else { 100.0 * zeros as f64 / total as f64 };
    let tiles = if block == 0 { 0 } else { m.nrows() / block };
    let zero_blocks = (0..tiles)
        .map(|r| {
            (0..tiles)
                .map(|c| m.view((r * block, c * block), (block, block)).iter().all(|v| *v == 0.0))
                .collect()
        })
        .collect();
    SparsityReport {
        zero_percent,
        zero_blocks,
        threshold_used,
    }
}

/// Sparsity of the thresholded precision of `jp`.
pub fn precision_sparsity(jp: &JointPair) -> SparsityReport {
    sparsity_percent(&jp.precision, jp.n(), jp.applied_threshold)
}

/// `max |m_ij - m_ji|`.
pub fn asymmetry(block: &DMatrix<f64>) -> Result<f64> {
    if !block.is_square() {
        return Err(Error::shape("square block", format!("{}x{}", block.nrows(), block.ncols())));
    }
    Ok(crate::linalg::max_asymmetry(block))
}

/// Field pairs whose precision cross block is identically zero.
pub fn ci_pattern(jp: &JointPair) -> BTreeSet<FieldPair> {
    zero_block_pairs(&jp.precision, &jp.layout)
}

pub fn zero_block_pairs(m: &DMatrix<f64>, layout: &BlockLayout) -> BTreeSet<FieldPair> {
    let n = layout.n();
    let mut out = BTreeSet::new();
    let order = layout.order();
    for (a, &k) in order.iter().enumerate() {
        for &l in &order[a + 1..] {
            let (rk, rl) = (layout.range(k).start, layout.range(l).start);
            let upper = m.view((rk, rl), (n, n)).iter().all(|v| *v == 0.0);
            let lower = m.view((rl, rk), (n, n)).iter().all(|v| *v == 0.0);
            if upper && lower {
                out.insert(unordered(k, l));
            }
        }
    }
    out
}

/// `‖Σ Q - I‖_max`.
pub fn inverse_residual(sigma: &DMatrix<f64>, precision: &DMatrix<f64>) -> Result<f64> {
    if sigma.shape() != precision.shape() || !sigma.is_square() {
        return Err(Error::shape(
            format!("{}x{}", sigma.nrows(), sigma.ncols()),
            format!("{}x{}", precision.nrows(), precision.ncols()),
        ));
    }
    let mut r = sigma * precision;
    for i in 0..r.nrows() {
        r[(i, i)] -= 1.0;
    }
    Ok(max_abs(&r))
}

/// Residual of `jp` before thresholding.
pub fn joint_inverse_residual(jp: &JointPair) -> Result<f64> {
    inverse_residual(&jp.sigma, &jp.precision_unthresholded())
}
