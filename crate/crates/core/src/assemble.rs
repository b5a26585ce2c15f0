//! Graph-guided construction of the joint covariance `Σ` and precision `Σ⁻¹`.
//!
//! Fields are visited in topological order. For field `r` with parents
//! `Pa(r)`, the new covariance row is
//!
//! ```text
//! Σ_rc = Σ_{t ∈ Pa(r)} B_rt Σ_tc            (c < r)
//! Σ_rr = Σ_{t ∈ Pa(r)} Σ_rt B_rtᵀ + D_rr
//! ```
//!
//! and the precision of the enlarged system is updated from the previous one
//! through the Schur-complement blocks
//!
//! ```text
//! BK1 = SG⁻¹ + (SG⁻¹ C D⁻¹)(R SG⁻¹)    BK2 = -SG⁻¹ C D⁻¹
//! BK3 = -D⁻¹ R SG⁻¹                    BK4 = D⁻¹
//! ```
//!
//! where `C` is the new covariance column and `R = Cᵀ`. Since `C = SG B_rᵀ`,
//! `SG⁻¹ C` is exactly the stacked `B_rtᵀ`; the structural update uses this to
//! touch only parent blocks, which keeps the precision build linear in `p`.
//! [`PrecisionUpdate::Literal`] evaluates the products as written.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FieldDag;
use crate::grid::{Grid, NeighborhoodMatrix};
use crate::kernels::{b_block_sparse, car_precision, matern_block_unchecked, taper_block, CarSpec, CrossKernel, MaternSpec};
use crate::linalg::{cholesky_inverse, cholesky_lower, symmetrize_in_place, BandCholesky, BlockMatrix, Csr};
use crate::stabilize::{find_min_regularization, is_pd, spectral_normalize_csr, threshold_precision, StabilizeConfig};

/// How each field's own (conditional) covariance is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum UnivariateMode {
    /// Dense Matérn covariance per field.
    Geostat(Vec<MaternSpec>),
    /// CAR precision per field over neighbours within `radius`.
    Car { specs: Vec<CarSpec>, radius: f64 },
    /// Matérn covariance tapered at `radius`.
    Taper { specs: Vec<MaternSpec>, radius: f64 },
}

impl UnivariateMode {
    pub fn len(&self) -> usize {
        match self {
            UnivariateMode::Geostat(s) | UnivariateMode::Taper { specs: s, .. } => s.len(),
            UnivariateMode::Car { specs, .. } => specs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            UnivariateMode::Geostat(_) => "geostat",
            UnivariateMode::Car { .. } => "car",
            UnivariateMode::Taper { .. } => "taper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PrecisionUpdate {
    /// Uses `SG⁻¹ C = B_rᵀ`; only parent blocks change.
    #[default]
    Structural,
    /// Forms every product of the block update densely. For verification.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub normalize_b: bool,
    pub regularize: bool,
    pub threshold: bool,
    pub update: PrecisionUpdate,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            normalize_b: true,
            regularize: true,
            threshold: true,
            update: PrecisionUpdate::Structural,
        }
    }
}

impl BuildOptions {
    /// Raw kernels through the literal block update, no regularization and no thresholding.
    pub fn original() -> Self {
        Self {
            normalize_b: false,
            regularize: false,
            threshold: false,
            update: PrecisionUpdate::Literal,
        }
    }
}

/// Everything needed to build a joint model. Means are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub dag: FieldDag,
    pub grid: Grid,
    /// Indexed by field label minus one.
    pub univariate: UnivariateMode,
    /// Keyed by `(parent, child)` labels.
    pub cross: BTreeMap<(usize, usize), CrossKernel>,
    pub stabilize: StabilizeConfig,
    pub options: BuildOptions,
}

impl ModelSpec {
    /// Validated spec with default stabilization and options.
    pub fn new(
        dag: FieldDag,
        grid: Grid,
        univariate: UnivariateMode,
        cross: BTreeMap<(usize, usize), CrossKernel>,
    ) -> Result<Self> {
        let spec = Self {
            dag,
            grid,
            univariate,
            cross,
            stabilize: StabilizeConfig::default(),
            options: BuildOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_options(mut self, options: BuildOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_stabilize(mut self, cfg: StabilizeConfig) -> Self {
        self.stabilize = cfg;
        self
    }

    pub fn p(&self) -> usize {
        self.dag.p()
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dag.p();
        if self.univariate.len() != p {
            return Err(Error::shape(
                format!("{p} univariate specs"),
                format!("{}", self.univariate.len()),
            ));
        }
        match &self.univariate {
            UnivariateMode::Geostat(specs) => specs.iter().try_for_each(MaternSpec::validate)?,
            UnivariateMode::Car { specs, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::NonPositiveRadius);
                }
                specs.iter().try_for_each(CarSpec::validate)?
            }
            UnivariateMode::Taper { specs, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::NonPositiveR);
                }
                specs.iter().try_for_each(MaternSpec::validate)?
            }
        }
        for (parent, child) in self.dag.edges() {
            match self.cross.get(&(parent, child)) {
                Some(k) => k.validate()?,
                None => return Err(Error::MissingKernel { parent, child }),
            }
        }
        if let Some(&(parent, child)) = self.cross.keys().find(|&&(a, b)| !self.dag.has_edge(a, b)) {
            return Err(Error::InvalidParameter(format!("kernel given for {parent}>{child}, which is not an edge")));
        }
        if self.options.regularize || self.options.normalize_b || self.options.threshold {
            self.stabilize.validate()?;
        }
        Ok(())
    }
}

/// Maps field labels to block positions (topological order) and row ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    order: Vec<usize>,
    position: Vec<usize>,
    n: usize,
}

impl BlockLayout {
    pub fn new(dag: &FieldDag, n: usize) -> Self {
        let order = dag.topological_order();
        let mut position = vec![0; order.len()];
        for (pos, &label) in order.iter().enumerate() {
            position[label - 1] = pos;
        }
        Self { order, position, n }
    }

    pub fn p(&self) -> usize {
        self.order.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.order.len() * self.n
    }

    /// Field labels in block order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn position(&self, label: usize) -> usize {
        self.position[label - 1]
    }

    pub fn label_at(&self, pos: usize) -> usize {
        self.order[pos]
    }

    /// Rows of `label` in the joint vector.
    pub fn range(&self, label: usize) -> Range<usize> {
        let start = self.position(label) * self.n;
        start..start + self.n
    }

    pub fn index(&self, label: usize, site: usize) -> usize {
        self.position(label) * self.n + site
    }
}

/// How a field's conditional precision `D⁻¹` is held.
#[derive(Debug, Clone, PartialEq)]
pub enum DInverse {
    Dense(DMatrix<f64>),
    Sparse(Csr),
}

impl DInverse {
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            DInverse::Dense(m) => m.clone(),
            DInverse::Sparse(c) => c.to_dense(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParentLink {
    pub label: usize,
    pub position: usize,
    /// `B_rt`, after normalization when enabled.
    pub b: Csr,
}

/// Resolved blocks for one field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldComponents {
    pub label: usize,
    pub parents: Vec<ParentLink>,
    /// Conditional covariance `D_rr`, regularization included.
    pub d: DMatrix<f64>,
    pub d_inv: DInverse,
    pub logdet_d: f64,
}

/// Multiply-add counts split by output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlopStats {
    pub sigma_path: u64,
    pub precision_path: u64,
}

impl FlopStats {
    pub fn total(&self) -> u64 {
        self.sigma_path + self.precision_path
    }
}

/// Output of one pass of the induction at a fixed regularization.
#[derive(Debug, Clone)]
pub struct Construction {
    pub layout: BlockLayout,
    pub sigma: BlockMatrix,
    /// Absent blocks are structural zeros.
    pub precision: BlockMatrix,
    /// In block (topological) order.
    pub fields: Vec<FieldComponents>,
    pub regularization: f64,
    pub flops: FlopStats,
}

impl Construction {
    pub fn logdet_shortcut(&self) -> f64 {
        self.fields.iter().map(|f| f.logdet_d).sum()
    }
}

fn resolve_field(
    spec: &ModelSpec,
    layout: &BlockLayout,
    adjacency: Option<&NeighborhoodMatrix>,
    pos: usize,
    delta: f64,
    flops: &mut FlopStats,
) -> Result<FieldComponents> {
    let label = layout.label_at(pos);
    let n = spec.n();
    let n3 = (n as u64).pow(3);
    let nonpd = |_| Error::NonPdBlock(label);
    let (d, d_inv, logdet_d) = match &spec.univariate {
        UnivariateMode::Geostat(specs) => {
            let mut d = matern_block_unchecked(&spec.grid, &specs[label - 1])?;
            add_diagonal(&mut d, delta);
            let (inv, logdet) = cholesky_inverse(&d).map_err(nonpd)?;
            flops.precision_path += n3;
            (d, DInverse::Dense(inv), logdet)
        }
        UnivariateMode::Taper { specs, radius } => {
            let cov = matern_block_unchecked(&spec.grid, &specs[label - 1])?;
            let mut d = taper_block(&cov, &spec.grid, *radius)?;
            add_diagonal(&mut d, delta);
            let (inv, logdet) = cholesky_inverse(&d).map_err(nonpd)?;
            flops.precision_path += n3;
            (d, DInverse::Dense(inv), logdet)
        }
        UnivariateMode::Car { specs, .. } => {
            let h = adjacency.expect("car mode resolves with an adjacency");
            let q = car_precision(h, &specs[label - 1])?.shift_diagonal(delta);
            let chol = BandCholesky::factor(&q).map_err(nonpd)?;
            let bw = chol.bandwidth() as u64;
            // factor plus one forward/back solve per column
            flops.sigma_path += n as u64 * (bw + 1) * (bw + 1) + (n as u64).pow(2) * (4 * bw + 2);
            (chol.inverse(), DInverse::Sparse(q), -chol.logdet())
        }
    };
    let mut parents = Vec::new();
    for &t in spec.dag.parents_unchecked(label) {
        let kernel = spec.cross.get(&(t, label)).ok_or(Error::MissingKernel { parent: t, child: label })?;
        let mut b = b_block_sparse(&spec.grid, kernel)?;
        if spec.options.normalize_b {
            b = spectral_normalize_csr(&b, spec.stabilize.spec_norm_target)?;
        }
        parents.push(ParentLink {
            label: t,
            position: layout.position(t),
            b,
        });
    }
    parents.sort_by_key(|l| l.position);
    Ok(FieldComponents {
        label,
        parents,
        d,
        d_inv,
        logdet_d,
    })
}

fn add_diagonal(m: &mut DMatrix<f64>, delta: f64) {
    if delta != 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += delta;
        }
    }
}

/// Runs the induction once with `delta` added to every `D_rr` (or to every CAR precision).
pub fn construct(spec: &ModelSpec, delta: f64) -> Result<Construction> {
    spec.validate()?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("regularization must be non-negative, got {delta}")));
    }
    let p = spec.p();
    let n = spec.n();
    let layout = BlockLayout::new(&spec.dag, n);
    let mut flops = FlopStats::default();
    let mut fields = Vec::with_capacity(p);
    let adjacency = match &spec.univariate {
        UnivariateMode::Car { radius, .. } => Some(spec.grid.adjacency(*radius)?),
        _ => None,
    };
    for pos in 0..p {
        fields.push(resolve_field(spec, &layout, adjacency.as_ref(), pos, delta, &mut flops)?);
    }

    let mut sigma = BlockMatrix::new_upper(p, n);
    let mut precision = BlockMatrix::new(p, n);
    for (r, field) in fields.iter().enumerate() {
        flops.sigma_path += grow_sigma(&mut sigma, r, field);
        flops.precision_path += match spec.options.update {
            PrecisionUpdate::Structural => grow_precision_structural(&mut precision, r, field),
            PrecisionUpdate::Literal => grow_precision_literal(&mut precision, &sigma, r, field),
        };
    }
    Ok(Construction {
        layout,
        sigma,
        precision,
        fields,
        regularization: delta,
        flops,
    })
}

/// Adds block row/column `r` of `Σ`. Returns the multiply-add count.
fn grow_sigma(sigma: &mut BlockMatrix, r: usize, field: &FieldComponents) -> u64 {
    let n = field.d.nrows() as u64;
    let b_t: Vec<Csr> = field.parents.iter().map(|link| link.b.transpose()).collect();
    // Σ_cr = Σ_t Σ_ct B_rtᵀ; only the upper blocks are stored, so Σ_ct with
    // c > t is read as Σ_tcᵀ and the product is formed as (B_rt Σ_tc)ᵀ.
    let column: Vec<(Option<DMatrix<f64>>, u64)> = (0..r)
        .into_par_iter()
        .map(|c| {
            let mut acc: Option<DMatrix<f64>> = None;
            let mut ops = 0;
            for (link, bt) in field.parents.iter().zip(&b_t) {
                let t = link.position;
                let term = if c <= t {
                    sigma.get(c, t).map(|s_ct| Csr::dense_mul(s_ct, bt))
                } else {
                    sigma.get(t, c).map(|s_tc| link.b.mul_dense(s_tc).transpose())
                };
                if let Some(term) = term {
                    ops += link.b.nnz() as u64 * n;
                    match &mut acc {
                        Some(a) => *a += term,
                        None => acc = Some(term),
                    }
                }
            }
            (acc, ops)
        })
        .collect();
    let mut ops = 0;
    for (c, (block, o)) in column.into_iter().enumerate() {
        ops += o;
        if let Some(b) = block {
            sigma.set(c, r, b);
        }
    }
    // Σ_rr = D_rr + Σ_t B_rt Σ_tr, symmetric up to rounding
    let mut diag = field.d.clone();
    for link in &field.parents {
        if let Some(s_tr) = sigma.get(link.position, r) {
            diag += link.b.mul_dense(s_tr);
            ops += link.b.nnz() as u64 * n;
        }
    }
    symmetrize_in_place(&mut diag);
    sigma.set(r, r, diag);
    ops
}

/// `B_tᵀ D⁻¹` as a dense block, with its multiply-add count.
fn bt_dinv(b: &Csr, d_inv: &DInverse) -> (DMatrix<f64>, u64) {
    let bt = b.transpose();
    match d_inv {
        DInverse::Dense(m) => (bt.mul_dense(m), b.nnz() as u64 * m.ncols() as u64),
        DInverse::Sparse(q) => {
            let (prod, ops) = bt.matmul(q);
            (prod.to_dense(), ops)
        }
    }
}

fn grow_precision_structural(q: &mut BlockMatrix, r: usize, field: &FieldComponents) -> u64 {
    let mut ops = 0;
    let sparse = matches!(field.d_inv, DInverse::Sparse(_));
    let mut left: Vec<(usize, DMatrix<f64>, Option<Csr>)> = Vec::with_capacity(field.parents.len());
    for link in &field.parents {
        let (m, o) = bt_dinv(&link.b, &field.d_inv);
        ops += o;
        let sparse_left = if sparse { Some(Csr::from_dense(&m)) } else { None };
        left.push((link.position, m, sparse_left));
    }
    for (i, (t, bt_dinv_t, sp)) in left.iter().enumerate() {
        for (j, link) in field.parents.iter().enumerate().skip(i) {
            let t2 = link.position;
            let mut block = match sp {
                Some(s) => {
                    let (prod, o) = s.matmul(&link.b);
                    ops += o;
                    prod.to_dense()
                }
                None => {
                    ops += link.b.nnz() as u64 * bt_dinv_t.nrows() as u64;
                    Csr::dense_mul(bt_dinv_t, &link.b)
                }
            };
            if i == j {
                symmetrize_in_place(&mut block);
                q.add(*t, *t, block);
            } else {
                q.add(t2, *t, block.transpose());
                q.add(*t, t2, block);
            }
        }
        let off = -bt_dinv_t.clone();
        q.set(r, *t, off.transpose());
        q.set(*t, r, off);
    }
    let mut dinv = field.d_inv.to_dense();
    symmetrize_in_place(&mut dinv);
    q.set(r, r, dinv);
    ops
}

fn dense_prefix(m: &BlockMatrix, k: usize) -> DMatrix<f64> {
    let n = m.block_size();
    let mut out = DMatrix::zeros(k * n, k * n);
    for a in 0..k {
        for b in 0..k {
            if let Some(blk) = m.get(a, b) {
                out.view_mut((a * n, b * n), (n, n)).copy_from(blk);
            }
        }
    }
    out
}

fn grow_precision_literal(q: &mut BlockMatrix, sigma: &BlockMatrix, r: usize, field: &FieldComponents) -> u64 {
    let n = field.d.nrows();
    let d_inv = {
        let mut m = field.d_inv.to_dense();
        symmetrize_in_place(&mut m);
        m
    };
    if r == 0 {
        q.set(0, 0, d_inv);
        return 0;
    }
    let k = r * n;
    let sg_inv = dense_prefix(q, r);
    let mut c = DMatrix::zeros(k, n);
    let mut row = DMatrix::zeros(n, k);
    for a in 0..r {
        if let Some(blk) = sigma.get(a, r) {
            c.view_mut((a * n, 0), (n, n)).copy_from(blk);
        }
        if let Some(blk) = sigma.block(r, a) {
            row.view_mut((0, a * n), (n, n)).copy_from(&*blk);
        }
    }
    let left = &sg_inv * &c * &d_inv;
    let right = &d_inv * &row * &sg_inv;
    let mut bk1 = &sg_inv + &left * &row * &sg_inv;
    symmetrize_in_place(&mut bk1);
    let bk2 = -left;
    let bk3 = -right;
    for a in 0..r {
        for b in 0..r {
            q.set(a, b, bk1.view((a * n, b * n), (n, n)).into_owned());
        }
        q.set(a, r, bk2.view((a * n, 0), (n, n)).into_owned());
        q.set(r, a, bk3.view((0, a * n), (n, n)).into_owned());
    }
    q.set(r, r, d_inv);
    let (k, n) = (k as u64, n as u64);
    2 * k * k * n + 2 * k * n * n + 2 * k * k * n + k * n * k
}

/// Built model with certificates.
#[derive(Debug, Clone)]
pub struct JointPair {
    pub layout: BlockLayout,
    pub sigma: DMatrix<f64>,
    /// After thresholding.
    pub precision: DMatrix<f64>,
    pub precision_sparse: Csr,
    /// Before thresholding, with structural zero blocks absent.
    pub precision_blocks: BlockMatrix,
    pub applied_threshold: f64,
    pub applied_regularization: f64,
    pub sigma_pd: bool,
    pub precision_pd: bool,
    pub fields: Vec<FieldComponents>,
    pub flops: FlopStats,
}

impl JointPair {
    pub fn p(&self) -> usize {
        self.layout.p()
    }

    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn certified(&self) -> bool {
        self.sigma_pd && self.precision_pd
    }

    /// `Σ_kl` between fields `k` and `l` (labels).
    pub fn sigma_block(&self, k: usize, l: usize) -> DMatrix<f64> {
        self.sigma.view((self.layout.range(k).start, self.layout.range(l).start), (self.n(), self.n())).into_owned()
    }

    /// Thresholded precision block between labels `k` and `l`.
    pub fn precision_block(&self, k: usize, l: usize) -> DMatrix<f64> {
        self.precision
            .view((self.layout.range(k).start, self.layout.range(l).start), (self.n(), self.n()))
            .into_owned()
    }

    pub fn precision_unthresholded(&self) -> DMatrix<f64> {
        self.precision_blocks.to_dense()
    }

    /// `Σ_r logdet D_rr`, equal to `logdet Σ`.
    pub fn logdet_shortcut(&self) -> f64 {
        self.fields.iter().map(|f| f.logdet_d).sum()
    }

    pub fn field(&self, label: usize) -> &FieldComponents {
        &self.fields[self.layout.position(label)]
    }
}

fn certify(c: &Construction) -> Result<(DMatrix<f64>, DMatrix<f64>, bool, bool)> {
    let sigma = c.sigma.to_dense();
    let q = c.precision.to_dense();
    let (s_ok, q_ok) = (certificate(&sigma)?, certificate(&q)?);
    Ok((sigma, q, s_ok, q_ok))
}

/// A built matrix that lost symmetry to rounding is not a PD certificate.
fn certificate(m: &DMatrix<f64>) -> Result<bool> {
    match is_pd(m) {
        Err(Error::AsymmetricInput { .. }) => Ok(false),
        other => other,
    }
}

/// Builds `Σ` and `Σ⁻¹`, certifies both, and sparsifies the precision.
///
/// With regularization enabled the build is repeated up the ladder until both
/// matrices are positive definite; otherwise the certificates are reported as found.
pub fn build_joint(spec: &ModelSpec) -> Result<JointPair> {
    spec.validate()?;
    let (construction, sigma, q_raw, sigma_pd, q_pd) = if spec.options.regularize {
        let (_, (c, (s, q, a, b))) = find_min_regularization(
            &spec.stabilize,
            |delta| {
                let c = construct(spec, delta)?;
                let cert = certify(&c)?;
                Ok((c, cert))
            },
            |(_, (_, _, a, b))| Ok(*a && *b),
        )
        .map_err(|e| match e {
            Error::RegularizationExhausted { iters } => {
                Error::PdFailure(format!("no positive definite build within {iters} regularization steps"))
            }
            other => other,
        })?;
        (c, s, q, a, b)
    } else {
        let c = construct(spec, 0.0)?;
        let (s, q, a, b) = certify(&c)?;
        (c, s, q, a, b)
    };

    let (applied_threshold, precision, precision_pd) = if spec.options.threshold && q_pd {
        let (t, qt) = threshold_precision(&q_raw, &spec.stabilize)?;
        let ok = is_pd(&qt)?;
        (t, qt, ok)
    } else {
        (0.0, q_raw, q_pd)
    };
    Ok(JointPair {
        layout: construction.layout,
        precision_sparse: Csr::from_dense(&precision),
        sigma,
        precision,
        precision_blocks: construction.precision,
        applied_threshold,
        applied_regularization: construction.regularization,
        sigma_pd,
        precision_pd,
        fields: construction.fields,
        flops: construction.flops,
    })
}

/// `Σ_r logdet D_rr` from explicit conditional covariance blocks.
pub fn logdet_shortcut(d_blocks: &[DMatrix<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (i, d) in d_blocks.iter().enumerate() {
        let l = cholesky_lower(d).map_err(|_| Error::NonPdBlock(i + 1))?;
        total += 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    }
    Ok(total)
}

/// `yᵀ Q y` over the stored entries of `q`.
pub fn quadratic_form(q: &Csr, y: &DVector<f64>) -> Result<f64> {
    Ok(q.quadratic_form_counted(y)?.0)
}

/// Draws `count` joint vectors (rows) by the recursion
/// `Y_r = Σ_{t ∈ Pa(r)} B_rt Y_t + chol(D_rr) z`, in block order.
pub fn sample(jp: &JointPair, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let n = jp.n();
    let mut out = DMatrix::zeros(count, jp.layout.dim());
    if count == 0 {
        return Ok(out);
    }
    let factors: Vec<DMatrix<f64>> = jp.fields.iter().map(|f| cholesky_lower(&f.d)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<DVector<f64>> = vec![DVector::zeros(n); jp.p()];
    for s in 0..count {
        for (pos, field) in jp.fields.iter().enumerate() {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let mut y = &factors[pos] * z;
            for link in &field.parents {
                y += link.b.mul_vec(&blocks[link.position]);
            }
            out.view_mut((s, pos * n), (1, n)).copy_from(&y.transpose());
            blocks[pos] = y;
        }
    }
    Ok(out)
}

/// Sample correlation between site `i` of field `k` and site `j` of field `l`.
pub fn empirical_cross_corr(draws: &DMatrix<f64>, layout: &BlockLayout, k: usize, l: usize) -> Result<DMatrix<f64>> {
    let m = draws.nrows();
    if m < 2 {
        return Err(Error::InsufficientSamples(m));
    }
    if draws.ncols() != layout.dim() {
        return Err(Error::shape(format!("{} columns", layout.dim()), format!("{}", draws.ncols())));
    }
    let n = layout.n();
    let centered = |label: usize| {
        let mut x = draws.columns(layout.range(label).start, n).into_owned();
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        x
    };
    let xk = centered(k);
    let xl = centered(l);
    let cov = xk.tr_mul(&xl);
    let sk: Vec<f64> = xk.column_iter().map(|c| c.norm()).collect();
    let sl: Vec<f64> = xl.column_iter().map(|c| c.norm()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let denom = sk[i] * sl[j];
        if denom > 0.0 {
            (cov[(i, j)] / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }))
}

/// Sample covariance of the rows of `draws` (known zero mean is not assumed).
pub fn empirical_covariance(draws: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = draws.nrows();
    if m < 2 {
        return Err(Error::InsufficientSamples(m));
    }
    let mut x = draws.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(x.tr_mul(&x) / (m as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::kernels::TriWaveSpec;
    use crate::linalg::{max_abs, max_asymmetry};

    fn geostat(dag: FieldDag, grid: Grid, kernel: CrossKernel) -> ModelSpec {
        let p = dag.p();
        let cross = fixtures::uniform_kernels(&dag, kernel);
        ModelSpec::new(dag, grid, UnivariateMode::Geostat(vec![MaternSpec { sigma2: 1.0, kappa: 2.0 }; p]), cross).unwrap()
    }

    fn v5() -> CrossKernel {
        CrossKernel::TriWave(TriWaveSpec::v5(0.1, 0.5))
    }

    #[test]
    fn single_field_is_its_own_block() {
        let g = Grid::line(-1.0, 1.0, 0.25).unwrap();
        let spec = geostat(FieldDag::edgeless(1), g.clone(), v5());
        let jp = build_joint(&spec).unwrap();
        let want = matern_block_unchecked(&g, &MaternSpec { sigma2: 1.0, kappa: 2.0 }).unwrap();
        assert!((&jp.sigma - &want).abs().max() < 2e-9);
        let resid = &jp.sigma * jp.precision_unthresholded() - DMatrix::identity(g.len(), g.len());
        assert!(max_abs(&resid) < 1e-10);
        assert!(jp.certified());
    }

    #[test]
    fn zero_amplitude_gives_block_diagonal() {
        let g = Grid::line(-1.0, 1.0, 0.25).unwrap();
        let spec = geostat(FieldDag::chain(2), g, CrossKernel::TriWave(TriWaveSpec::v5(0.0, 0.5)));
        let c = construct(&spec, 0.0).unwrap();
        let s = c.sigma.to_dense();
        let n = spec.n();
        assert_eq!(max_abs(&s.view((n, 0), (n, n)).into_owned()), 0.0);
        assert_eq!(max_abs(&c.precision.to_dense().view((n, 0), (n, n)).into_owned()), 0.0);
    }

    #[test]
    fn two_parent_cross_block_formula() {
        let g = Grid::line(-1.0, 1.0, 0.2).unwrap();
        let dag = FieldDag::new(3, [(1, 3), (2, 3)]).unwrap();
        let spec = geostat(dag, g, v5());
        let c = construct(&spec, 0.0).unwrap();
        let s11 = c.sigma.get(0, 0).unwrap();
        let s12 = c.sigma.get(0, 1);
        assert!(s12.is_none());
        let f3 = &c.fields[2];
        let b31 = f3.parents[0].b.to_dense();
        let b32 = f3.parents[1].b.to_dense();
        let s22 = c.sigma.get(1, 1).unwrap();
        // Σ13 = Σ11 B31ᵀ + Σ12 B32ᵀ with Σ12 = 0, and Σ23 = Σ22 B32ᵀ
        assert!((c.sigma.get(0, 2).unwrap() - s11 * b31.transpose()).abs().max() < 1e-13);
        assert!((c.sigma.get(1, 2).unwrap() - s22 * b32.transpose()).abs().max() < 1e-13);
    }

    #[test]
    fn structural_and_literal_updates_agree() {
        let g = Grid::line(-1.0, 1.0, 0.1).unwrap();
        let spec = geostat(fixtures::six_field_dag(), g, v5());
        let a = construct(&spec, 1e-9).unwrap();
        let lit = spec.clone().with_options(BuildOptions {
            update: PrecisionUpdate::Literal,
            ..Default::default()
        });
        let b = construct(&lit, 1e-9).unwrap();
        let qa = a.precision.to_dense();
        let qb = b.precision.to_dense();
        // the literal products cancel large terms and keep fewer digits
        let rel = max_abs(&(&qa - &qb)) / max_abs(&qa);
        assert!(rel <= 1e-6, "{rel}");
        assert_eq!(a.sigma.to_dense(), b.sigma.to_dense());
    }

    #[test]
    fn precision_matches_dense_inverse() {
        let g = Grid::line(-1.0, 1.0, 0.1).unwrap();
        for car in [false, true] {
            let spec = fixtures::six_field_spec(g.clone(), fixtures::Family::TriWave, car).unwrap();
            let c = construct(&spec, 1e-9).unwrap();
            let s = c.sigma.to_dense();
            let q = c.precision.to_dense();
            let (inv, logdet) = cholesky_inverse(&s).unwrap();
            assert!(max_abs(&(&q - inv)) <= 1e-8 * max_abs(&q));
            assert!((c.logdet_shortcut() - logdet).abs() <= 1e-6 * logdet.abs().max(1.0));
        }
    }

    #[test]
    fn six_field_structure() {
        let spec = fixtures::six_field_spec(fixtures::unit_grid(), fixtures::Family::TriWave, false).unwrap();
        let jp = build_joint(&spec).unwrap();
        assert!(jp.certified());
        assert!(jp.applied_regularization >= 1e-9);
        for k in 1..=6 {
            assert!(max_asymmetry(&jp.sigma_block(k, k)) <= 1e-12);
        }
        let b12 = jp.sigma_block(1, 2);
        assert!(max_asymmetry(&b12) > 0.0);
        let ci = spec.dag.moralize().ci_pairs();
        for k in 1..=6 {
            for l in (k + 1)..=6 {
                let zero = max_abs(&jp.precision_block(k, l)) == 0.0;
                assert_eq!(zero, ci.contains(&(k, l)), "({k},{l})");
            }
        }
    }

    #[test]
    fn missing_kernel_is_reported() {
        let g = Grid::line(-1.0, 1.0, 0.5).unwrap();
        let dag = FieldDag::chain(3);
        let mut cross = BTreeMap::new();
        cross.insert((1, 2), v5());
        let r = ModelSpec::new(dag, g, UnivariateMode::Geostat(vec![MaternSpec { sigma2: 1.0, kappa: 2.0 }; 3]), cross);
        assert_eq!(r.unwrap_err(), Error::MissingKernel { parent: 2, child: 3 });
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_shortcut(&[DMatrix::identity(3, 3), DMatrix::identity(3, 3)]).unwrap(), 0.0);
        let v = logdet_shortcut(&[DMatrix::identity(3, 3), DMatrix::identity(3, 3) * 2.0]).unwrap();
        assert!((v - 3.0 * 2f64.ln()).abs() < 1e-14);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(logdet_shortcut(&[DMatrix::identity(2, 2), bad]), Err(Error::NonPdBlock(2)));
    }

    #[test]
    fn quadratic_form_examples() {
        let i = Csr::identity_scaled(6, 1.0);
        assert_eq!(quadratic_form(&i, &DVector::from_element(6, 1.0)).unwrap(), 6.0);
        assert_eq!(quadratic_form(&i, &DVector::zeros(6)).unwrap(), 0.0);
        assert!(quadratic_form(&i, &DVector::zeros(5)).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_independent_when_b_vanishes() {
        let g = Grid::line(0.0, 2.0, 1.0).unwrap();
        let dag = FieldDag::chain(2);
        let cross = fixtures::uniform_kernels(&dag, CrossKernel::TriWave(TriWaveSpec::v5(0.0, 0.5)));
        let spec = ModelSpec::new(dag, g.clone(), UnivariateMode::Car { specs: vec![CarSpec::new(1.0, 0.5).unwrap(); 2], radius: 0.5 }, cross).unwrap();
        let jp = build_joint(&spec).unwrap();
        assert_eq!(sample(&jp, 0, 1).unwrap().nrows(), 0);
        let a = sample(&jp, 4000, 7).unwrap();
        assert_eq!(a, sample(&jp, 4000, 7).unwrap());
        let cov = empirical_covariance(&a).unwrap();
        for i in 0..6 {
            assert!((cov[(i, i)] - 1.0).abs() < 0.08);
        }
        let c = empirical_cross_corr(&a, &jp.layout, 1, 1).unwrap();
        assert!((&c - DMatrix::identity(3, 3)).abs().max() < 0.06);
        assert_eq!(empirical_cross_corr(&a.rows(0, 1).into_owned(), &jp.layout, 1, 2), Err(Error::InsufficientSamples(1)));
        let two = empirical_cross_corr(&a.rows(0, 2).into_owned(), &jp.layout, 1, 2).unwrap();
        assert!(two.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn fully_connected_uses_every_previous_field() {
        let g = Grid::line(-1.0, 1.0, 0.25).unwrap();
        let spec = geostat(FieldDag::fully_connected(4), g, v5());
        let c = construct(&spec, 0.0).unwrap();
        let last = &c.fields[3];
        assert_eq!(last.parents.iter().map(|l| l.position).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(c.precision.present_blocks(), 16);
    }
}
