//! Scalar kernels and the `n x n` blocks built from them.
//!
//! Univariate blocks (Matérn ν = 3/2, CAR precision, tapered Matérn) model a
//! field's own covariance or precision. Cross blocks `B_rt` hold partial
//! regression coefficients of a child field on a parent field and are built
//! from displacement kernels (Tri-Wave, Wendland), which makes them
//! asymmetric whenever the translation is non-zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, NeighborhoodMatrix};
use crate::linalg::{cholesky_lower, Csr};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternSpec {
    pub sigma2: f64,
    pub kappa: f64,
}

impl MaternSpec {
    pub fn new(sigma2: f64, kappa: f64) -> Result<Self> {
        let s = Self { sigma2, kappa };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !(self.kappa > 0.0) || !self.sigma2.is_finite() || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Matérn needs sigma2 > 0 and kappa > 0, got ({}, {})",
                self.sigma2, self.kappa
            )));
        }
        Ok(())
    }
}

/// Modified triangular wave `A (1 - φ (|h-Δ|/|Δ|)²)` on `|h-Δ| <= ρ|Δ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriWaveSpec {
    pub amplitude: f64,
    pub delta: f64,
    pub phi: f64,
    pub rho: f64,
}

impl TriWaveSpec {
    /// φ = 1/2, ρ = 2.
    pub fn v4(amplitude: f64, delta: f64) -> Self {
        Self { amplitude, delta, phi: 0.5, rho: 2.0 }
    }

    /// φ = 2, ρ = 1.
    pub fn v5(amplitude: f64, delta: f64) -> Self {
        Self { amplitude, delta, phi: 2.0, rho: 1.0 }
    }

    /// φ = 2, ρ = 2.
    pub fn v7(amplitude: f64, delta: f64) -> Self {
        Self { amplitude, delta, phi: 2.0, rho: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta == 0.0 {
            return Err(Error::ZeroDelta);
        }
        if !(self.phi > 0.0) || !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Tri-Wave needs phi > 0 and rho > 0, got ({}, {})",
                self.phi, self.rho
            )));
        }
        Ok(())
    }
}

/// Translated Wendland (k = 3/2) regression kernel `A (1 - u⁴ (1 + 4u))`, `u = |h-Δ|/R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WendlandSpec {
    pub amplitude: f64,
    pub delta: f64,
    pub radius: f64,
}

impl WendlandSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::NonPositiveR);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarSpec {
    pub sigma2: f64,
    /// Fraction of the admissible range `1 / max|eig(H)|`.
    pub phi_frac: f64,
}

impl CarSpec {
    pub const DEFAULT_PHI_FRAC: f64 = 0.95;

    pub fn new(sigma2: f64, phi_frac: f64) -> Result<Self> {
        let s = Self { sigma2, phi_frac };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !(self.phi_frac > 0.0 && self.phi_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "CAR needs sigma2 > 0 and 0 < phi_frac < 1, got ({}, {})",
                self.sigma2, self.phi_frac
            )));
        }
        Ok(())
    }
}

/// Kernel used to fill a cross-regression block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CrossKernel {
    TriWave(TriWaveSpec),
    Wendland(WendlandSpec),
}

impl CrossKernel {
    pub fn amplitude(&self) -> f64 {
        match self {
            CrossKernel::TriWave(s) => s.amplitude,
            CrossKernel::Wendland(s) => s.amplitude,
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            CrossKernel::TriWave(s) => s.delta,
            CrossKernel::Wendland(s) => s.delta,
        }
    }

    pub fn with_amplitude_delta(self, amplitude: f64, delta: f64) -> Self {
        match self {
            CrossKernel::TriWave(s) => CrossKernel::TriWave(TriWaveSpec { amplitude, delta, ..s }),
            CrossKernel::Wendland(s) => CrossKernel::Wendland(WendlandSpec { amplitude, delta, ..s }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CrossKernel::TriWave(s) => s.validate(),
            CrossKernel::Wendland(s) => s.validate(),
        }
    }

    /// Kernel value at a (possibly 2D) displacement. The translation acts
    /// along the first axis.
    pub fn eval(&self, h: [f64; 2]) -> Result<f64> {
        let offset = |delta: f64| (h[0] - delta).hypot(h[1]);
        match self {
            CrossKernel::TriWave(s) => {
                s.validate()?;
                Ok(triwave_at_offset(offset(s.delta), s))
            }
            CrossKernel::Wendland(s) => {
                s.validate()?;
                Ok(wendland_at_offset(offset(s.delta), s))
            }
        }
    }
}

/// `σ² (1 + κd) exp(-κd)`.
pub fn matern32(d: f64, spec: &MaternSpec) -> Result<f64> {
    if d < 0.0 {
        return Err(Error::NegativeDistance(d));
    }
    spec.validate()?;
    Ok(matern32_unchecked(d, spec))
}

fn matern32_unchecked(d: f64, spec: &MaternSpec) -> f64 {
    let kd = spec.kappa * d;
    spec.sigma2 * (1.0 + kd) * (-kd).exp()
}

pub fn triwave(h: f64, spec: &TriWaveSpec) -> Result<f64> {
    spec.validate()?;
    Ok(triwave_at_offset((h - spec.delta).abs(), spec))
}

fn triwave_at_offset(off: f64, s: &TriWaveSpec) -> f64 {
    let scale = s.delta.abs();
    if off > s.rho * scale {
        return 0.0;
    }
    let u = off / scale;
    s.amplitude * (1.0 - s.phi * u * u)
}

/// Evaluated exactly as the printed formula: at the support edge `u = 1`
/// the value is `-4A`, and it jumps to 0 beyond.
pub fn wendland32(h: f64, spec: &WendlandSpec) -> Result<f64> {
    spec.validate()?;
    Ok(wendland_at_offset((h - spec.delta).abs(), spec))
}

fn wendland_at_offset(off: f64, s: &WendlandSpec) -> f64 {
    let u = off / s.radius;
    if u > 1.0 {
        return 0.0;
    }
    s.amplitude * (1.0 - u.powi(4) * (1.0 + 4.0 * u))
}

/// Wendland-1 correlation taper `(1 - u)⁴ (1 + 4u)` on `u = d/R <= 1`.
pub fn wendland_taper(d: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::NonPositiveR);
    }
    if d < 0.0 {
        return Err(Error::NegativeDistance(d));
    }
    Ok(taper_unchecked(d, radius))
}

fn taper_unchecked(d: f64, radius: f64) -> f64 {
    let u = d / radius;
    if u >= 1.0 {
        return 0.0;
    }
    (1.0 - u).powi(4) * (1.0 + 4.0 * u)
}

/// Matérn covariance over all site pairs; checked for positive definiteness.
pub fn matern_block(g: &Grid, spec: &MaternSpec) -> Result<DMatrix<f64>> {
    let m = matern_block_unchecked(g, spec)?;
    cholesky_lower(&m)?;
    Ok(m)
}

pub(crate) fn matern_block_unchecked(g: &Grid, spec: &MaternSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = g.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = spec.sigma2;
        for i in (j + 1)..n {
            let v = matern32_unchecked(g.distance_unchecked(i, j), spec);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// `B[i][j] = kernel(s_j - s_i)`.
pub fn b_block(g: &Grid, kernel: &CrossKernel) -> Result<DMatrix<f64>> {
    Ok(b_block_sparse(g, kernel)?.to_dense())
}

pub(crate) fn b_block_sparse(g: &Grid, kernel: &CrossKernel) -> Result<Csr> {
    kernel.validate()?;
    let n = g.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::new();
        for j in 0..n {
            let v = kernel.eval(g.displacement_unchecked(i, j))?;
            if v != 0.0 {
                row.push((j, v));
            }
        }
        rows.push(row);
    }
    Ok(Csr::from_rows(n, n, rows))
}

/// CAR precision `(I - φH) / σ²` with `φ = phi_frac / max|eig(H)|`.
///
/// An all-zero adjacency gives the independence model `I / σ²`.
pub fn car_precision(h: &NeighborhoodMatrix, spec: &CarSpec) -> Result<Csr> {
    spec.validate()?;
    let n = h.len();
    let rho = h.spectral_radius();
    let phi = if rho > 0.0 { spec.phi_frac / rho } else { 0.0 };
    let inv_s2 = 1.0 / spec.sigma2;
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = h.neighbors(i).iter().map(|&j| (j, -phi * inv_s2)).collect();
            let at = row.partition_point(|e| e.0 < i);
            row.insert(at, (i, inv_s2));
            row
        })
        .collect();
    Ok(Csr::from_rows(n, n, rows))
}

/// Schur product of `cov` with the Wendland-1 taper of radius `radius`.
pub fn taper_block(cov: &DMatrix<f64>, g: &Grid, radius: f64) -> Result<DMatrix<f64>> {
    if !(radius > 0.0) {
        return Err(Error::NonPositiveR);
    }
    let n = g.len();
    if cov.shape() != (n, n) {
        return Err(Error::shape(format!("{n}x{n}"), format!("{}x{}", cov.nrows(), cov.ncols())));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let t = taper_unchecked(g.distance_unchecked(i, j), radius);
        if t == 0.0 {
            0.0
        } else {
            cov[(i, j)] * t
        }
    }))
}
