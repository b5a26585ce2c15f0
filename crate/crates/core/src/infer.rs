//! Gaussian likelihood, derivative-free fitting, conditional prediction and
//! hold-out scoring.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assemble::{construct, sample, JointPair, ModelSpec, UnivariateMode};
use crate::error::{Error, Result};
use crate::fixtures::Split;
use crate::kernels::{CarSpec, MaternSpec};
use crate::linalg::cholesky_lower;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-field parameters of the univariate blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldParams {
    Matern { sigma2: f64, kappa: f64 },
    Car { sigma2: f64, phi_frac: f64 },
}

/// Free parameters of a model plus the observation-noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    /// `(A, Δ)` per `(parent, child)` edge.
    pub edges: BTreeMap<(usize, usize), (f64, f64)>,
    /// Indexed by field label minus one.
    pub fields: Vec<FieldParams>,
    pub tau2: f64,
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ParamVector {
    pub fn from_spec(spec: &ModelSpec, tau2: f64) -> Self {
        let edges = spec.cross.iter().map(|(&e, k)| (e, (k.amplitude(), k.delta()))).collect();
        let fields = match &spec.univariate {
            UnivariateMode::Geostat(s) | UnivariateMode::Taper { specs: s, .. } => s
                .iter()
                .map(|m| FieldParams::Matern {
                    sigma2: m.sigma2,
                    kappa: m.kappa,
                })
                .collect(),
            UnivariateMode::Car { specs, .. } => specs
                .iter()
                .map(|c| FieldParams::Car {
                    sigma2: c.sigma2,
                    phi_frac: c.phi_frac,
                })
                .collect(),
        };
        Self { edges, fields, tau2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau2 must be non-negative, got {}", self.tau2)));
        }
        for f in &self.fields {
            match *f {
                FieldParams::Matern { sigma2, kappa } => MaternSpec { sigma2, kappa }.validate()?,
                FieldParams::Car { sigma2, phi_frac } => CarSpec { sigma2, phi_frac }.validate()?,
            }
        }
        if self.edges.values().any(|&(_, d)| d == 0.0) {
            return Err(Error::ZeroDelta);
        }
        Ok(())
    }

    /// Copy of `spec` carrying these parameters.
    pub fn apply(&self, spec: &ModelSpec) -> Result<ModelSpec> {
        self.validate()?;
        let mut out = spec.clone();
        if self.fields.len() != spec.p() {
            return Err(Error::shape(format!("{} field parameter sets", spec.p()), format!("{}", self.fields.len())));
        }
        for (&edge, &(a, d)) in &self.edges {
            let k = out
                .cross
                .get_mut(&edge)
                .ok_or_else(|| Error::InvalidParameter(format!("no kernel on edge {}>{}", edge.0, edge.1)))?;
            *k = k.with_amplitude_delta(a, d);
        }
        let mismatch = || Error::InvalidParameter("field parameters do not match the univariate mode".into());
        match &mut out.univariate {
            UnivariateMode::Geostat(s) | UnivariateMode::Taper { specs: s, .. } => {
                for (m, f) in s.iter_mut().zip(&self.fields) {
                    match *f {
                        FieldParams::Matern { sigma2, kappa } => *m = MaternSpec { sigma2, kappa },
                        FieldParams::Car { .. } => return Err(mismatch()),
                    }
                }
            }
            UnivariateMode::Car { specs, .. } => {
                for (c, f) in specs.iter_mut().zip(&self.fields) {
                    match *f {
                        FieldParams::Car { sigma2, phi_frac } => *c = CarSpec { sigma2, phi_frac },
                        FieldParams::Matern { .. } => return Err(mismatch()),
                    }
                }
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// Unconstrained coordinates: raw `(A, Δ)`, log variances and ranges,
    /// logit `phi_frac`, and log `τ²` when it is positive (zero stays fixed).
    fn encode(&self) -> Vec<f64> {
        let mut x = Vec::new();
        for &(a, d) in self.edges.values() {
            x.push(a);
            x.push(d);
        }
        for f in &self.fields {
            match *f {
                FieldParams::Matern { sigma2, kappa } => {
                    x.push(sigma2.ln());
                    x.push(kappa.ln());
                }
                FieldParams::Car { sigma2, phi_frac } => {
                    x.push(sigma2.ln());
                    x.push(logit(phi_frac));
                }
            }
        }
        if self.tau2 > 0.0 {
            x.push(self.tau2.ln());
        }
        x
    }

    fn decode(&self, x: &[f64]) -> Self {
        let mut it = x.iter().copied();
        let mut next = || it.next().expect("coordinate count matches encode");
        let edges = self.edges.keys().map(|&e| (e, (next(), next()))).collect();
        let fields = self
            .fields
            .iter()
            .map(|f| match f {
                FieldParams::Matern { .. } => FieldParams::Matern {
                    sigma2: next().exp(),
                    kappa: next().exp(),
                },
                FieldParams::Car { .. } => FieldParams::Car {
                    sigma2: next().exp(),
                    phi_frac: sigmoid(next()),
                },
            })
            .collect();
        let tau2 = if self.tau2 > 0.0 { next().exp() } else { 0.0 };
        Self { edges, fields, tau2 }
    }
}

/// Negative log-likelihood of the joint vector `y` (block order).
///
/// With `τ² = 0` this uses the sparse precision and `logdet Σ = Σ logdet D_rr`;
/// with `τ² > 0` it factors `Σ + τ²I` densely.
pub fn nll(params: &ParamVector, y: &DVector<f64>, spec: &ModelSpec) -> Result<f64> {
    let model = params.apply(spec)?;
    let delta = if model.options.regularize { model.stabilize.reg_init } else { 0.0 };
    let c = construct(&model, delta)?;
    let dim = c.layout.dim();
    if y.len() != dim {
        return Err(Error::shape(format!("vector of length {dim}"), format!("{}", y.len())));
    }
    let constant = dim as f64 * LN_2PI;
    if params.tau2 == 0.0 {
        let q = c.precision.to_csr();
        let (quad, _) = q.quadratic_form_counted(y)?;
        return Ok(0.5 * (quad + c.logdet_shortcut() + constant));
    }
    let mut marginal = c.sigma.to_dense();
    for i in 0..dim {
        marginal[(i, i)] += params.tau2;
    }
    dense_nll(&marginal, y).map_err(|e| match e {
        Error::CholeskyFailure(m) => Error::PdFailure(m),
        other => other,
    })
}

/// Negative log-density of `N(0, cov)` at `y` via dense Cholesky.
pub fn dense_nll(cov: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let l = cholesky_lower(cov)?;
    let logdet = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let w = l.solve_lower_triangular(y).ok_or(Error::SingularSystem)?;
    Ok(0.5 * (w.norm_squared() + logdet + y.len() as f64 * LN_2PI))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: ParamVector,
    pub nll: f64,
    pub evaluations: usize,
    /// The budget ran out before the simplex converged.
    pub budget_exhausted: bool,
}

/// Nelder–Mead on the unconstrained coordinates, at most `budget` likelihood evaluations.
///
/// The returned point never has a larger `nll` than `init`.
pub fn fit(y: &DVector<f64>, spec: &ModelSpec, init: &ParamVector, budget: usize) -> Result<FitResult> {
    if budget == 0 {
        return Err(Error::InvalidParameter("evaluation budget must be at least 1".into()));
    }
    let f0 = nll(init, y, spec)?;
    let x0 = init.encode();
    let dim = x0.len();
    let mut evals = 1;
    let objective = |x: &[f64]| -> f64 {
        match nll(&init.decode(x), y, spec) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), f0)];
    for i in 0..dim {
        if evals >= budget {
            break;
        }
        let mut x = x0.clone();
        x[i] += 0.1;
        let f = objective(&x);
        evals += 1;
        simplex.push((x, f));
    }
    let mut converged = false;
    if simplex.len() == dim + 1 {
        converged = nelder_mead(&mut simplex, objective, budget, &mut evals);
    }
    let (xbest, fbest) = simplex
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("simplex is non-empty");
    let (params, value) = if fbest < f0 { (init.decode(&xbest), fbest) } else { (init.clone(), f0) };
    Ok(FitResult {
        params,
        nll: value,
        evaluations: evals,
        budget_exhausted: !converged,
    })
}

/// Standard reflection/expansion/contraction/shrink steps. Returns whether it converged.
fn nelder_mead(
    simplex: &mut [(Vec<f64>, f64)],
    f: impl Fn(&[f64]) -> f64,
    budget: usize,
    evals: &mut usize,
) -> bool {
    let dim = simplex.len() - 1;
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[dim].1);
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) && size <= 1e-6 {
            return true;
        }
        if *evals >= budget {
            return false;
        }
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let xr = combine(&centroid, &simplex[dim].0, -1.0);
        let fr = f(&xr);
        *evals += 1;
        if fr < best {
            if *evals >= budget {
                simplex[dim] = (xr, fr);
                continue;
            }
            let xe = combine(&centroid, &simplex[dim].0, -2.0);
            let fe = f(&xe);
            *evals += 1;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            if *evals >= budget {
                if fr < worst {
                    simplex[dim] = (xr, fr);
                }
                continue;
            }
            let outside = fr < worst;
            let xc = if outside {
                combine(&centroid, &xr, 0.5)
            } else {
                combine(&centroid, &simplex[dim].0, 0.5)
            };
            let fc = f(&xc);
            *evals += 1;
            if fc < fr.min(worst) {
                simplex[dim] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for entry in simplex[1..].iter_mut() {
                    if *evals >= budget {
                        break;
                    }
                    let x = combine(&x0, &entry.0, 0.5);
                    let v = f(&x);
                    *evals += 1;
                    *entry = (x, v);
                }
            }
        }
    }
}

/// Kriging predictor `Σ[test, fit] (Σ[fit, fit] + τ²I)⁻¹ z_fit`.
pub fn predict_from_covariance(
    sigma: &DMatrix<f64>,
    fit_idx: &[usize],
    test_idx: &[usize],
    z_fit: &DVector<f64>,
    tau2: f64,
) -> Result<DVector<f64>> {
    let dim = sigma.nrows();
    if z_fit.len() != fit_idx.len() {
        return Err(Error::shape(format!("{} fit values", fit_idx.len()), format!("{}", z_fit.len())));
    }
    if let Some(&bad) = fit_idx.iter().chain(test_idx).find(|&&i| i >= dim) {
        return Err(Error::IndexOutOfRange { index: bad, n: dim });
    }
    let mut in_fit = vec![false; dim];
    for &i in fit_idx {
        in_fit[i] = true;
    }
    if let Some(&i) = test_idx.iter().find(|&&i| in_fit[i]) {
        return Err(Error::IndexOverlap(i));
    }
    if !(tau2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau2 must be non-negative, got {tau2}")));
    }
    let m = fit_idx.len();
    let mut kff = DMatrix::from_fn(m, m, |i, j| sigma[(fit_idx[i], fit_idx[j])]);
    for i in 0..m {
        kff[(i, i)] += tau2;
    }
    let ktf = DMatrix::from_fn(test_idx.len(), m, |i, j| sigma[(test_idx[i], fit_idx[j])]);
    let chol = nalgebra::Cholesky::new(kff).ok_or(Error::SingularSystem)?;
    let alpha = chol.solve(z_fit);
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(ktf * alpha)
}

pub fn predict_conditional(
    jp: &JointPair,
    fit_idx: &[usize],
    test_idx: &[usize],
    z_fit: &DVector<f64>,
    tau2: f64,
) -> Result<DVector<f64>> {
    predict_from_covariance(&jp.sigma, fit_idx, test_idx, z_fit, tau2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub mae: f64,
    pub rmse: f64,
    pub baseline_mae: f64,
    pub baseline_rmse: f64,
    pub n_test: usize,
}

impl CvReport {
    pub fn score(pred: &[f64], truth: &[f64], baseline: &[f64]) -> Result<Self> {
        let n = truth.len();
        if n == 0 {
            return Err(Error::EmptyTestSet);
        }
        if pred.len() != n || baseline.len() != n {
            return Err(Error::shape(format!("{n} predictions"), format!("{} / {}", pred.len(), baseline.len())));
        }
        let errs = |p: &[f64]| {
            let mae = p.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
            let rmse = (p.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
            (mae, rmse)
        };
        let (mae, rmse) = errs(pred);
        let (baseline_mae, baseline_rmse) = errs(baseline);
        Ok(Self {
            mae,
            rmse,
            baseline_mae,
            baseline_rmse,
            n_test: n,
        })
    }
}

/// Predicts the test indices of `split` from the observed fit values and scores
/// against `truth`. The baseline predicts the mean of the observed fit values of
/// the same field.
pub fn cross_validate(jp: &JointPair, observed: &DVector<f64>, truth: &DVector<f64>, split: &Split, tau2: f64) -> Result<CvReport> {
    if split.test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let dim = jp.layout.dim();
    if observed.len() != dim || truth.len() != dim {
        return Err(Error::shape(format!("vectors of length {dim}"), format!("{} / {}", observed.len(), truth.len())));
    }
    let z_fit = DVector::from_iterator(split.fit.len(), split.fit.iter().map(|&i| observed[i]));
    let pred = predict_conditional(jp, &split.fit, &split.test, &z_fit, tau2)?;
    let n = jp.n();
    let mut sums = vec![(0.0, 0usize); jp.p()];
    for &i in &split.fit {
        sums[i / n].0 += observed[i];
        sums[i / n].1 += 1;
    }
    let baseline: Vec<f64> = split
        .test
        .iter()
        .map(|&i| {
            let (s, c) = sums[i / n];
            if c == 0 {
                0.0
            } else {
                s / c as f64
            }
        })
        .collect();
    let truth_test: Vec<f64> = split.test.iter().map(|&i| truth[i]).collect();
    CvReport::score(pred.as_slice(), &truth_test, &baseline)
}

/// One latent draw from `jp` and a copy with `N(0, τ²)` noise: `(truth, observed)`.
pub fn simulate_observations(jp: &JointPair, tau2: f64, seed: u64) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(tau2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau2 must be non-negative, got {tau2}")));
    }
    let draw = sample(jp, 1, seed)?;
    let truth = DVector::from_iterator(draw.ncols(), draw.row(0).iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, tau2.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let observed = truth.map(|v| v + noise.sample(&mut rng));
    Ok((truth, observed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemble::{build_joint, BuildOptions};
    use crate::fixtures;
    use crate::graph::FieldDag;
    use crate::grid::Grid;
    use crate::kernels::{CrossKernel, TriWaveSpec};

    fn iid_spec(n: usize) -> ModelSpec {
        let g = Grid::line_with_sites(0.0, 1.0, n).unwrap();
        ModelSpec::new(
            FieldDag::edgeless(1),
            g,
            UnivariateMode::Car {
                specs: vec![CarSpec::new(1.0, 0.5).unwrap()],
                radius: 0.5,
            },
            BTreeMap::new(),
        )
        .unwrap()
        .with_options(BuildOptions {
            regularize: false,
            ..BuildOptions::default()
        })
    }

    #[test]
    fn nll_of_identity() {
        let spec = iid_spec(4);
        let params = ParamVector::from_spec(&spec, 0.0);
        let v = nll(&params, &DVector::zeros(4), &spec).unwrap();
        assert!((v - 2.0 * LN_2PI).abs() < 1e-12);
        let v = nll(&params, &DVector::from_element(4, 1.0), &spec).unwrap();
        assert!((v - (2.0 + 2.0 * LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn nll_with_noise_uses_marginal() {
        let spec = iid_spec(3);
        let params = ParamVector { tau2: 0.5, ..ParamVector::from_spec(&spec, 0.0) };
        let y = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let got = nll(&params, &y, &spec).unwrap();
        let want = dense_nll(&(DMatrix::identity(3, 3) * 1.5), &y).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn variance_mle_recovered() {
        let spec = iid_spec(40);
        let y = DVector::from_fn(40, |i, _| ((i * 7919) % 23) as f64 / 7.0 - 1.5);
        let mle = y.norm_squared() / 40.0;
        let init = ParamVector {
            fields: vec![FieldParams::Car { sigma2: mle * 1.3, phi_frac: 0.5 }],
            ..ParamVector::from_spec(&spec, 0.0)
        };
        let out = fit(&y, &spec, &init, 400).unwrap();
        let FieldParams::Car { sigma2, .. } = out.params.fields[0] else { unreachable!() };
        assert!((sigma2 - mle).abs() <= 0.01 * mle, "{sigma2} vs {mle}");
        assert!(out.nll <= nll(&init, &y, &spec).unwrap());
    }

    #[test]
    fn budget_of_one_returns_init() {
        let spec = iid_spec(5);
        let init = ParamVector::from_spec(&spec, 0.0);
        let y = DVector::from_element(5, 0.3);
        let out = fit(&y, &spec, &init, 1).unwrap();
        assert_eq!(out.params, init);
        assert!(out.budget_exhausted);
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn fitted_coupling_beats_independence() {
        let g = Grid::line(-1.0, 1.0, 0.25).unwrap();
        let dag = FieldDag::chain(2);
        let cross = fixtures::uniform_kernels(&dag, CrossKernel::TriWave(TriWaveSpec::v5(0.3, 0.5)));
        let spec = ModelSpec::new(dag, g, UnivariateMode::Geostat(vec![MaternSpec { sigma2: 1.0, kappa: 2.0 }; 2]), cross)
            .unwrap()
            .with_options(BuildOptions {
                normalize_b: false,
                ..Default::default()
            });
        let jp = build_joint(&spec).unwrap();
        let y = sample(&jp, 1, 3).unwrap().row(0).transpose();
        let truth = ParamVector::from_spec(&spec, 0.0);
        let mut zero = truth.clone();
        zero.edges.values_mut().for_each(|e| e.0 = 0.0);
        let out = fit(&y, &spec, &truth, 200).unwrap();
        assert!(out.nll <= nll(&zero, &y, &spec).unwrap());
        assert!(out.nll <= nll(&truth, &y, &spec).unwrap());
    }

    #[test]
    fn prediction_examples() {
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.9, 0.0, 0.9, 1.0]);
        let p = predict_from_covariance(&sigma, &[1, 2], &[0], &DVector::from_vec(vec![1.0, 2.0]), 0.0).unwrap();
        assert_eq!(p[0], 0.0);
        let scalar = DMatrix::from_element(2, 2, 2.0);
        let p = predict_from_covariance(&scalar, &[0], &[1], &DVector::from_element(1, 3.0), 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0 * 3.0).abs() < 1e-12);
        assert_eq!(
            predict_from_covariance(&sigma, &[0, 1], &[1], &DVector::zeros(2), 0.0),
            Err(Error::IndexOverlap(1))
        );
        let singular = DMatrix::from_element(3, 3, 1.0);
        assert_eq!(
            predict_from_covariance(&singular, &[0, 1], &[2], &DVector::zeros(2), 0.0),
            Err(Error::SingularSystem)
        );
    }

    #[test]
    fn interpolates_as_correlation_grows() {
        for rho in [0.9, 0.99, 0.999999] {
            let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let p = predict_from_covariance(&sigma, &[0], &[1], &DVector::from_element(1, 1.7), 0.0).unwrap();
            assert!((p[0] - 1.7 * rho).abs() < 1e-12);
        }
    }

    #[test]
    fn scores() {
        let r = CvReport::score(&[1.0, 2.0], &[1.0, 2.0], &[1.5, 1.5]).unwrap();
        assert_eq!((r.mae, r.rmse), (0.0, 0.0));
        assert_eq!(r.baseline_mae, 0.5);
        assert!(r.mae <= r.rmse);
        assert_eq!(CvReport::score(&[], &[], &[]), Err(Error::EmptyTestSet));
    }
}
