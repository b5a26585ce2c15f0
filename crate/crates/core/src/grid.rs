//! Regular 1D/2D site lattices, displacements and neighborhood adjacency.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetric_max_eigenvalue;

/// Slack used when counting lattice points so that e.g. `[-1, 1]` by `0.05`
/// yields 41 sites despite `2.0 / 0.05` not being exactly representable.
const COUNT_EPS: f64 = 1e-9;

/// An ordered set of sites on a regular lattice with inclusive endpoints.
///
/// 2D sites are stored row-major: the first coordinate varies slowest, so the
/// ordering is lexicographic.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    step: Vec<f64>,
    shape: Vec<usize>,
    coords: Vec<[f64; 2]>,
}

impl Grid {
    /// Builds a lattice over `[lo, hi]` per axis.
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], step: &[f64]) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if lo.len() != dim || hi.len() != dim || step.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} bounds and steps, got lo={} hi={} step={}",
                lo.len(),
                hi.len(),
                step.len()
            )));
        }
        if step.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::NonPositiveStep);
        }
        let mut shape = Vec::with_capacity(dim);
        for axis in 0..dim {
            if !(hi[axis] > lo[axis]) {
                return Err(Error::DegenerateDomain { axis });
            }
            let count = ((hi[axis] - lo[axis]) / step[axis] + COUNT_EPS).floor() as usize + 1;
            if count < 2 {
                return Err(Error::DegenerateDomain { axis });
            }
            shape.push(count);
        }

        let axis_coord = |axis: usize, k: usize| lo[axis] + k as f64 * step[axis];
        let coords = if dim == 1 {
            (0..shape[0]).map(|k| [axis_coord(0, k), 0.0]).collect()
        } else {
            let mut c = Vec::with_capacity(shape[0] * shape[1]);
            for a in 0..shape[0] {
                for b in 0..shape[1] {
                    c.push([axis_coord(0, a), axis_coord(1, b)]);
                }
            }
            c
        };

        Ok(Self {
            dim,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            step: step.to_vec(),
            shape,
            coords,
        })
    }

    /// 1D convenience constructor.
    pub fn line(lo: f64, hi: f64, step: f64) -> Result<Self> {
        Self::new(1, &[lo], &[hi], &[step])
    }

    /// 1D lattice with exactly `n` sites starting at `lo`.
    pub fn line_with_sites(lo: f64, step: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::DegenerateDomain { axis: 0 });
        }
        Self::line(lo, lo + (n - 1) as f64 * step, step)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    /// Sites per axis.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Coordinates of site `i` (the second component is 0 on 1D grids).
    pub fn site(&self, i: usize) -> Result<[f64; 2]> {
        self.coords
            .get(i)
            .copied()
            .ok_or(Error::IndexOutOfRange { index: i, n: self.len() })
    }

    pub fn sites(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Signed displacement `s_j - s_i`, component-wise.
    pub fn displacement(&self, i: usize, j: usize) -> Result<[f64; 2]> {
        let a = self.site(i)?;
        let b = self.site(j)?;
        Ok([b[0] - a[0], b[1] - a[1]])
    }

    /// Euclidean distance between sites `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        let h = self.displacement(i, j)?;
        Ok(h[0].hypot(h[1]))
    }

    pub(crate) fn distance_unchecked(&self, i: usize, j: usize) -> f64 {
        let a = self.coords[i];
        let b = self.coords[j];
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub(crate) fn displacement_unchecked(&self, i: usize, j: usize) -> [f64; 2] {
        let a = self.coords[i];
        let b = self.coords[j];
        [b[0] - a[0], b[1] - a[1]]
    }

    /// Largest distance between any two sites.
    pub fn diameter(&self) -> f64 {
        self.hi
            .iter()
            .zip(&self.lo)
            .zip(&self.shape)
            .zip(&self.step)
            .map(|(((_, lo), count), step)| {
                let last = lo + (*count - 1) as f64 * step;
                (last - lo).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Neighborhood matrix with `h[i][j] = 1` iff `0 < dist(i, j) <= radius`.
    pub fn adjacency(&self, radius: f64) -> Result<NeighborhoodMatrix> {
        if !(radius > 0.0) {
            return Err(Error::NonPositiveRadius);
        }
        // Small relative slack so that a radius of exactly one step catches
        // neighbors whose computed distance rounds slightly above it.
        let cutoff = radius * (1.0 + 1e-9);
        let n = self.len();
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.distance_unchecked(i, j);
                if d > 0.0 && d <= cutoff {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        for row in &mut neighbors {
            row.sort_unstable();
        }
        Ok(NeighborhoodMatrix {
            n,
            radius,
            neighbors,
            spectral_radius: OnceLock::new(),
        })
    }
}

/// Symmetric 0/1 site adjacency with zero diagonal, stored as neighbor lists.
#[derive(Debug, Clone)]
pub struct NeighborhoodMatrix {
    n: usize,
    radius: f64,
    neighbors: Vec<Vec<usize>>,
    spectral_radius: OnceLock<f64>,
}

impl PartialEq for NeighborhoodMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.radius == other.radius && self.neighbors == other.neighbors
    }
}

impl NeighborhoodMatrix {
    /// Builds from explicit neighbor lists; lists are symmetrized and sorted.
    pub fn from_neighbors(n: usize, radius: f64, lists: Vec<Vec<usize>>) -> Result<Self> {
        if lists.len() != n {
            return Err(Error::shape(format!("{n} neighbor lists"), lists.len().to_string()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for (i, row) in lists.iter().enumerate() {
            for &j in row {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, n });
                }
                if j != i {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        for row in &mut neighbors {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self {
            n,
            radius,
            neighbors,
            spectral_radius: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        u8::from(self.neighbors[i].binary_search(&j).is_ok())
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn nnz(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Largest `|i - j|` over adjacent pairs.
    pub fn bandwidth(&self) -> usize {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.neighbors.iter().enumerate() {
            for &j in row {
                h[(i, j)] = 1.0;
            }
        }
        h
    }

    /// `max |eig(H)|`, computed once. `H` is nonnegative, so this is its
    /// largest eigenvalue.
    pub fn spectral_radius(&self) -> f64 {
        *self.spectral_radius.get_or_init(|| {
            if self.nnz() == 0 {
                return 0.0;
            }
            symmetric_max_eigenvalue(self.n, |v| {
                DVector::from_fn(self.n, |i, _| self.neighbors[i].iter().map(|&j| v[j]).sum())
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_counts_use_inclusive_endpoints() {
        assert_eq!(Grid::line(-1.0, 1.0, 0.05).unwrap().len(), 41);
        assert_eq!(Grid::line(-10.0, 10.0, 0.1).unwrap().len(), 201);
        let g = Grid::new(2, &[0.0, 0.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.site(0).unwrap(), [0.0, 0.0]);
        assert_eq!(g.site(1).unwrap(), [0.0, 0.5]);
        assert_eq!(g.site(3).unwrap(), [0.5, 0.0]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(Grid::line(0.0, 1.0, 0.0), Err(Error::NonPositiveStep));
        assert_eq!(Grid::line(0.0, 1.0, -0.1), Err(Error::NonPositiveStep));
        assert_eq!(Grid::line(0.0, 1.0, 2.0), Err(Error::DegenerateDomain { axis: 0 }));
        assert_eq!(Grid::line(1.0, 1.0, 0.1), Err(Error::DegenerateDomain { axis: 0 }));
        assert!(matches!(Grid::new(3, &[0.0], &[1.0], &[0.1]), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn displacement_is_signed_and_antisymmetric() {
        let g = Grid::line(0.0, 1.0, 0.1).unwrap();
        assert!((g.displacement(0, 3).unwrap()[0] - 0.3).abs() < 1e-12);
        assert_eq!(g.displacement(4, 4).unwrap(), [0.0, 0.0]);
        assert!((g.displacement(3, 0).unwrap()[0] + 0.3).abs() < 1e-12);
        assert_eq!(g.displacement(0, 11), Err(Error::IndexOutOfRange { index: 11, n: 11 }));
    }

    #[test]
    fn first_order_adjacency_is_tridiagonal() {
        let g = Grid::line(0.0, 1.0, 0.1).unwrap();
        let h = g.adjacency(0.1).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(h.get(i, j), u8::from(i.abs_diff(j) == 1), "({i},{j})");
            }
        }
        assert_eq!(h.bandwidth(), 1);
        let none = g.adjacency(0.05).unwrap();
        assert_eq!(none.nnz(), 0);
        assert_eq!(g.adjacency(0.0).unwrap_err(), Error::NonPositiveRadius);
    }

    #[test]
    fn lattice_adjacency_is_four_connected() {
        let g = Grid::new(2, &[0.0, 0.0], &[2.0, 2.0], &[1.0, 1.0]).unwrap();
        let h = g.adjacency(1.0).unwrap();
        assert_eq!(h.row_sum(4), 4);
        assert_eq!(h.row_sum(0), 2);
        assert_eq!(h.row_sum(1), 3);
    }

    #[test]
    fn path_graph_spectral_radius() {
        let g = Grid::line_with_sites(0.0, 1.0, 10).unwrap();
        let h = g.adjacency(1.0).unwrap();
        let expected = 2.0 * (std::f64::consts::PI / 11.0).cos();
        assert!((h.spectral_radius() - expected).abs() < 1e-12);
        let long = Grid::line_with_sites(0.0, 1.0, 300).unwrap().adjacency(1.0).unwrap();
        let expected = 2.0 * (std::f64::consts::PI / 301.0).cos();
        assert!((long.spectral_radius() - expected).abs() < 1e-10);
    }

    #[test]
    fn lattice_spectral_radius_matches_dense_eigenvalues() {
        let g = Grid::new(2, &[0.0, 0.0], &[1.0, 0.7], &[0.1, 0.1]).unwrap();
        let h = g.adjacency(0.15).unwrap();
        let dense = h.to_dense().symmetric_eigenvalues().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!((h.spectral_radius() - dense).abs() <= 1e-10 * dense);
    }
}
