//! Spectral normalization of regression blocks, positive-definiteness
//! certificates, and the regularization and threshold ladders.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, max_abs, max_asymmetry, symmetric_max_eigenvalue, Csr};


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizeConfig {
    /// Spectral norm of every `B` block after normalization.
    pub spec_norm_target: f64,
    pub reg_init: f64,
    pub reg_growth: f64,
    pub threshold_init: f64,
    pub threshold_shrink: f64,
    pub max_iters: usize,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        Self {
            spec_norm_target: 0.99,
            reg_init: 1e-9,
            reg_growth: 10.0,
            threshold_init: 1e-3,
            threshold_shrink: 10.0,
            max_iters: 15,
        }
    }
}

impl StabilizeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.spec_norm_target > 0.0
            && self.spec_norm_target < 1.0
            && self.reg_init > 0.0
            && self.reg_growth > 1.0
            && self.threshold_init > 0.0
            && self.threshold_shrink > 1.0
            && self.max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid stabilization config {self:?}")))
        }
    }

    /// Regularization tried at ladder step `k`.
    pub fn regularization_at(&self, k: usize) -> f64 {
        self.reg_init * self.reg_growth.powi(k as i32)
    }

    /// Threshold tried at ladder step `k`.
    pub fn threshold_at(&self, k: usize) -> f64 {
        self.threshold_init / self.threshold_shrink.powi(k as i32)
    }
}

/// Largest singular value, from the top eigenvalue of `BᵀB`.
pub fn spectral_norm(b: &DMatrix<f64>) -> f64 {
    symmetric_max_eigenvalue(b.ncols(), |v| b.tr_mul(&(b * v))).max(0.0).sqrt()
}

pub fn spectral_norm_csr(b: &Csr) -> f64 {
    let bt = b.transpose();
    symmetric_max_eigenvalue(b.ncols(), |v| bt.mul_vec(&b.mul_vec(v))).max(0.0).sqrt()
}

/// Rescales `b` so its spectral norm equals `target`. A zero matrix is returned unchanged.
pub fn spectral_normalize(b: &DMatrix<f64>, target: f64) -> Result<DMatrix<f64>> {
    check_target(target)?;
    let s = spectral_norm(b);
    if s == 0.0 {
        return Ok(b.clone());
    }
    Ok(b * (target / s))
}

pub fn spectral_normalize_csr(b: &Csr, target: f64) -> Result<Csr> {
    check_target(target)?;
    let s = spectral_norm_csr(b);
    let mut out = b.clone();
    if s > 0.0 {
        out.scale(target / s);
    }
    Ok(out)
}

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("spectral norm target must lie in (0, 1), got {target}")))
    }
}

/// `m + δI`.
pub fn regularize_diag(m: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows().min(m.ncols()) {
        out[(i, i)] += delta;
    }
    out
}

/// True iff a Cholesky factorization succeeds with positive pivots.
///
/// Inputs with non-finite entries are reported as not positive definite.
pub fn is_pd(m: &DMatrix<f64>) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::shape("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    let diff = max_asymmetry(m);
    if diff > 1e-10 * max_abs(m).max(1.0) {
        return Err(Error::AsymmetricInput { max_diff: diff });
    }
    Ok(cholesky_lower(m).is_ok())
}

/// Whether an error means "this attempt was not positive definite" rather than a bad input.
pub(crate) fn is_pd_failure(e: &Error) -> bool {
    matches!(e, Error::CholeskyFailure(_) | Error::NonPdBlock(_) | Error::PdFailure(_))
}

/// Walks the regularization ladder until `certified` accepts the build.
///
/// `build` receives the candidate regularization; PD-type errors from it count
/// as a failed rung, anything else aborts the search.
pub fn find_min_regularization<T>(
    cfg: &StabilizeConfig,
    mut build: impl FnMut(f64) -> Result<T>,
    certified: impl Fn(&T) -> Result<bool>,
) -> Result<(f64, T)> {
    cfg.validate()?;
    for k in 0..cfg.max_iters {
        let delta = cfg.regularization_at(k);
        match build(delta) {
            Ok(out) => {
                if certified(&out)? {
                    return Ok((delta, out));
                }
            }
            Err(e) if is_pd_failure(&e) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::RegularizationExhausted { iters: cfg.max_iters })
}

/// Off-diagonal entries with `|q_ij| < t` set to zero.
pub fn apply_threshold(q: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = q.clone();
    for j in 0..q.ncols() {
        for i in 0..q.nrows() {
            if i != j && out[(i, j)].abs() < t {
                out[(i, j)] = 0.0;
            }
        }
    }
    out
}

/// Largest ladder threshold whose thresholded matrix stays positive definite.
///
/// Returns `(0, q)` when no rung within `max_iters` works.
pub fn threshold_precision(q: &DMatrix<f64>, cfg: &StabilizeConfig) -> Result<(f64, DMatrix<f64>)> {
    cfg.validate()?;
    for k in 0..cfg.max_iters {
        let t = cfg.threshold_at(k);
        let candidate = apply_threshold(q, t);
        if is_pd(&candidate)? {
            return Ok((t, candidate));
        }
    }
    Ok((0.0, q.clone()))
}

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn normalize_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        let out = spectral_normalize(&i3, 0.5).unwrap();
        assert!((out - &i3 * 0.5).abs().max() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let out = spectral_normalize(&d, 0.9).unwrap();
        assert!((out[(0, 0)] - 0.9).abs() < 1e-12);
        assert!((out[(1, 1)] - 0.45).abs() < 1e-12);
        assert_eq!(out[(0, 1)], 0.0);
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(spectral_normalize(&z, 0.5).unwrap(), z);
        assert!(spectral_normalize(&i3, 1.0).is_err());
    }

    /// Plain power iteration on `BᵀB`, run to a tight fixed point.
    fn power_oracle(b: &DMatrix<f64>) -> f64 {
        let mut v = DVector::from_element(b.ncols(), 1.0).normalize();
        let mut lambda = 0.0;
        for _ in 0..200_000 {
            let w = b.tr_mul(&(b * &v));
            let next = v.dot(&w);
            v = w.normalize();
            if (next - lambda).abs() <= 1e-15 * next {
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }

    #[test]
    fn spectral_norm_matches_svd() {
        for seed in 1..6 {
            let b = random_matrix(12, seed);
            let svd = b.clone().singular_values().max();
            assert!((spectral_norm(&b) - svd).abs() <= 1e-10 * svd);
            let out = spectral_normalize(&b, 0.99).unwrap();
            let got = out.singular_values().max();
            assert!((got - 0.99).abs() <= 1e-10, "{got}");
            let csr = Csr::from_dense(&b);
            assert!((spectral_norm_csr(&csr) - svd).abs() <= 1e-10 * svd);
        }
    }

    #[test]
    fn spectral_norm_of_banded_kernel_blocks() {
        use crate::kernels::{b_block, CrossKernel, TriWaveSpec, WendlandSpec};
        let grid = crate::grid::Grid::line_with_sites(0.0, 0.1, 120).unwrap();
        let kernels = [
            CrossKernel::TriWave(TriWaveSpec::v7(1.0, 1.0)),
            CrossKernel::TriWave(TriWaveSpec::v5(0.3, -0.4)),
            CrossKernel::Wendland(WendlandSpec { amplitude: 0.5, delta: 0.2, radius: 0.5 }),
        ];
        for k in kernels {
            let b = b_block(&grid, &k).unwrap();
            let svd = b.clone().singular_values().max();
            let power = power_oracle(&b);
            assert!((power - svd).abs() <= 1e-8 * svd, "oracles disagree: {power} vs {svd}");
            let got = spectral_norm_csr(&Csr::from_dense(&b));
            assert!((got - svd).abs() <= 1e-10 * svd, "{got} vs {svd}");
        }
    }

    #[test]
    fn regularize_shifts_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(regularize_diag(&m, 0.0), m);
        assert_eq!(regularize_diag(&DMatrix::zeros(2, 2), 1e-9), DMatrix::identity(2, 2) * 1e-9);
        let e = regularize_diag(&m, 0.25).symmetric_eigenvalues().min();
        assert!((e - 1.25).abs() < 1e-12);
    }

    #[test]
    fn pd_certificates() {
        assert!(is_pd(&DMatrix::identity(4, 4)).unwrap());
        assert!(!is_pd(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))).unwrap());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(is_pd(&asym), Err(Error::AsymmetricInput { .. })));
        let nan = DMatrix::from_element(2, 2, f64::NAN);
        assert!(!is_pd(&nan).unwrap());
    }

    #[test]
    fn ladder_first_rung() {
        let cfg = StabilizeConfig::default();
        let (delta, _) = find_min_regularization(&cfg, |d| Ok(regularize_diag(&DMatrix::identity(3, 3), d)), is_pd).unwrap();
        assert_eq!(delta, cfg.reg_init);
    }

    #[test]
    fn ladder_needs_unit_shift() {
        let cfg = StabilizeConfig::default();
        let base = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0, 3.0]));
        let (delta, m) = find_min_regularization(&cfg, |d| Ok(regularize_diag(&base, d)), is_pd).unwrap();
        let first_above = (0..cfg.max_iters).map(|k| cfg.regularization_at(k)).find(|&d| d > 1.0).unwrap();
        assert_eq!(delta, first_above);
        assert!(is_pd(&m).unwrap());
    }

    #[test]
    fn ladder_exhaustion() {
        let cfg = StabilizeConfig { max_iters: 4, ..Default::default() };
        let r = find_min_regularization(&cfg, |_| Ok(()), |_| Ok(false));
        assert_eq!(r.unwrap_err(), Error::RegularizationExhausted { iters: 4 });
        let r = find_min_regularization(&cfg, |_| Err::<(), _>(Error::CholeskyFailure("x".into())), |_| Ok(true));
        assert_eq!(r.unwrap_err(), Error::RegularizationExhausted { iters: 4 });
        let r = find_min_regularization(&cfg, |_| Err::<(), _>(Error::ZeroDelta), |_| Ok(true));
        assert_eq!(r.unwrap_err(), Error::ZeroDelta);
    }

    #[test]
    fn threshold_examples() {
        let cfg = StabilizeConfig::default();
        let (t, q) = threshold_precision(&DMatrix::identity(4, 4), &cfg).unwrap();
        assert_eq!(t, 1e-3);
        assert_eq!(q, DMatrix::identity(4, 4));
        let mut m = DMatrix::identity(3, 3) * 2.0;
        m[(0, 1)] = 1e-6;
        m[(1, 0)] = 1e-6;
        m[(1, 2)] = 0.5;
        m[(2, 1)] = 0.5;
        let (t, q) = threshold_precision(&m, &cfg).unwrap();
        assert_eq!(t, 1e-3);
        assert_eq!(q[(0, 1)], 0.0);
        assert_eq!(q[(1, 2)], 0.5);
    }

    #[test]
    fn threshold_backs_off_when_sparsifying_breaks_pd() {
        // det = 1 + 2a²s - 2a² - s² is positive only while the small coupling s survives
        let (a, s) = (0.70711, 5e-4);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, a, s, a, 1.0, a, s, a, 1.0]);
        assert!(is_pd(&m).unwrap());
        assert!(!is_pd(&apply_threshold(&m, 1e-3)).unwrap());
        let (t, q) = threshold_precision(&m, &StabilizeConfig::default()).unwrap();
        assert_eq!(t, 1e-4);
        assert_eq!(q, m);
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(condition_number(&DMatrix::identity(3, 3)), 1.0);
        assert_eq!(condition_number(&DMatrix::zeros(2, 2)), f64::INFINITY);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        assert!((condition_number(&d) - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalization_keeps_support(seed in 1u64..1000, target in 0.1f64..0.99) {
            let mut b = random_matrix(8, seed);
            for i in 0..8 {
                for j in 0..8 {
                    if (i + 2 * j) % 3 == 0 {
                        b[(i, j)] = 0.0;
                    }
                }
            }
            let out = spectral_normalize(&b, target).unwrap();
            for (x, y) in b.iter().zip(out.iter()) {
                prop_assert_eq!(*x == 0.0, *y == 0.0);
            }
        }

        #[test]
        fn thresholding_never_adds_nonzeros(seed in 1u64..1000) {
            let a = random_matrix(6, seed) * 0.01;
            let q = &a * a.transpose() + DMatrix::identity(6, 6);
            let (_, qt) = threshold_precision(&q, &StabilizeConfig::default()).unwrap();
            prop_assert!(is_pd(&qt).unwrap());
            let nz = |m: &DMatrix<f64>| m.iter().filter(|v| **v != 0.0).count();
            prop_assert!(nz(&qt) <= nz(&q));
        }
    }
}
