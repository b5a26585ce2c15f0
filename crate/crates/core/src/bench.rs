//! Construction timings, scaling fits and the positive-definiteness sweep.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assemble::{build_joint, construct, BuildOptions, FlopStats, ModelSpec, UnivariateMode};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::graph::FieldDag;
use crate::grid::Grid;
use crate::kernels::{CarSpec, CrossKernel, MaternSpec, TriWaveSpec, WendlandSpec};

/// Site spacing of benchmark grids.
pub const BENCH_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeKind {
    Geostat,
    Car,
    Taper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GraphKind {
    /// Fully connected DAG.
    FullyDependent,
    Chain,
    /// The six-field fixture; requires `p = 6`.
    SixField,
}

/// A univariate mode on a graph family, e.g. `car-chain` or `geostat-fd`.
///
/// `neighbor` is accepted for `car` and `mdag` for `chain`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Scenario {
    pub mode: ModeKind,
    pub graph: GraphKind,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unsupported = || Error::ScenarioUnsupported(s.to_string());
        let (m, g) = s.to_ascii_lowercase().split_once('-').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(unsupported)?;
        let mode = match m.as_str() {
            "geostat" | "matern" => ModeKind::Geostat,
            "car" | "neighbor" => ModeKind::Car,
            "taper" => ModeKind::Taper,
            _ => return Err(unsupported()),
        };
        let graph = match g.as_str() {
            "fd" => GraphKind::FullyDependent,
            "chain" | "mdag" => GraphKind::Chain,
            "six" | "moral" => GraphKind::SixField,
            _ => return Err(unsupported()),
        };
        Ok(Self { mode, graph })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.mode {
            ModeKind::Geostat => "geostat",
            ModeKind::Car => "car",
            ModeKind::Taper => "taper",
        };
        let g = match self.graph {
            GraphKind::FullyDependent => "fd",
            GraphKind::Chain => "chain",
            GraphKind::SixField => "six",
        };
        write!(f, "{m}-{g}")
    }
}

impl Scenario {
    pub fn dag(&self, p: usize) -> Result<FieldDag> {
        if p == 0 {
            return Err(Error::InvalidParameter("need at least one field".into()));
        }
        Ok(match self.graph {
            GraphKind::FullyDependent => FieldDag::fully_connected(p),
            GraphKind::Chain => FieldDag::chain(p),
            GraphKind::SixField if p == 6 => fixtures::six_field_dag(),
            GraphKind::SixField => return Err(Error::ScenarioUnsupported(format!("{self} with p = {p}"))),
        })
    }

    /// Random valid model on `n` sites spaced [`BENCH_STEP`] apart.
    ///
    /// `σ² ∈ [0.5, 2]`, `κ ∈ [1, 5]`, V5 Tri-Wave with `A, Δ ∈ [0.1, 1]`;
    /// CAR neighbours are first order and tapers cut at ten sites.
    pub fn random_spec(&self, n: usize, p: usize, rng: &mut impl Rng) -> Result<ModelSpec> {
        let dag = self.dag(p)?;
        let grid = Grid::line_with_sites(0.0, BENCH_STEP, n)?;
        let matern = |rng: &mut dyn rand::RngCore| MaternSpec {
            sigma2: rng.random_range(0.5..=2.0),
            kappa: rng.random_range(1.0..=5.0),
        };
        let univariate = match self.mode {
            ModeKind::Geostat => UnivariateMode::Geostat((0..p).map(|_| matern(rng)).collect()),
            ModeKind::Taper => UnivariateMode::Taper {
                specs: (0..p).map(|_| matern(rng)).collect(),
                radius: 10.0 * BENCH_STEP,
            },
            ModeKind::Car => UnivariateMode::Car {
                specs: (0..p)
                    .map(|_| CarSpec {
                        sigma2: rng.random_range(0.5..=2.0),
                        phi_frac: CarSpec::DEFAULT_PHI_FRAC,
                    })
                    .collect(),
                radius: BENCH_STEP,
            },
        };
        let cross = dag
            .edges()
            .map(|e| {
                let k = TriWaveSpec::v5(rng.random_range(0.1..=1.0), rng.random_range(0.1..=1.0));
                (e, CrossKernel::TriWave(k))
            })
            .collect();
        ModelSpec::new(dag, grid, univariate, cross)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    /// Seconds per timed repetition.
    pub times: Vec<f64>,
    pub min: f64,
    pub lq: f64,
    pub median: f64,
    pub mean: f64,
    pub uq: f64,
    pub max: f64,
    /// Flop counts of the last repetition.
    pub flops: FlopStats,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BenchRecord {
    pub fn from_times(scenario: String, n: usize, p: usize, times: Vec<f64>, flops: FlopStats) -> Self {
        let mut s = times.clone();
        s.sort_by(f64::total_cmp);
        Self {
            scenario,
            n,
            p,
            reps: times.len(),
            min: s[0],
            lq: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            uq: quantile(&s, 0.75),
            max: s[s.len() - 1],
            times,
            flops,
        }
    }
}

const WARMUPS: usize = 2;

/// Times generation of `Σ` and `Σ⁻¹` (one induction pass at the initial
/// regularization) on freshly randomized models, single-threaded.
///
/// Positive-definiteness certification is not part of the timed region.
pub fn time_construction(scenario: Scenario, n: usize, p: usize, reps: usize, seed: u64) -> Result<BenchRecord> {
    if reps < 5 {
        return Err(Error::InvalidParameter(format!("need at least 5 repetitions, got {reps}")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(reps);
    let mut flops = FlopStats::default();
    for rep in 0..(WARMUPS + reps) {
        let spec = scenario.random_spec(n, p, &mut rng)?;
        let delta = spec.stabilize.reg_init;
        let (elapsed, c) = pool.install(|| {
            let start = Instant::now();
            let c = construct(&spec, delta);
            (start.elapsed().as_secs_f64(), c)
        });
        let c = c?;
        if rep >= WARMUPS {
            times.push(elapsed);
            flops = c.flops;
        }
    }
    Ok(BenchRecord::from_times(scenario.to_string(), n, p, times, flops))
}

/// Least-squares slope of `log(mean time)` against `log(p)`.
pub fn scaling_exponent(records: &[BenchRecord]) -> Result<f64> {
    let mut ps: Vec<usize> = records.iter().map(|r| r.p).collect();
    ps.sort_unstable();
    ps.dedup();
    if ps.len() < 4 {
        return Err(Error::InsufficientPoints { needed: 4, got: ps.len() });
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| ((r.p as f64).ln(), r.mean.ln())).collect();
    Ok(slope(&pts))
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Cross-kernel families of the robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepKernel {
    V4,
    V5,
    V7,
    /// `R = 0.5`.
    Wendland,
}

impl SweepKernel {
    pub const ALL: [SweepKernel; 4] = [SweepKernel::V4, SweepKernel::V5, SweepKernel::V7, SweepKernel::Wendland];

    pub fn kernel(self, amplitude: f64, delta: f64) -> CrossKernel {
        match self {
            SweepKernel::V4 => CrossKernel::TriWave(TriWaveSpec::v4(amplitude, delta)),
            SweepKernel::V5 => CrossKernel::TriWave(TriWaveSpec::v5(amplitude, delta)),
            SweepKernel::V7 => CrossKernel::TriWave(TriWaveSpec::v7(amplitude, delta)),
            SweepKernel::Wendland => CrossKernel::Wendland(WendlandSpec {
                amplitude,
                delta,
                radius: 0.5,
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepKernel::V4 => "V4",
            SweepKernel::V5 => "V5",
            SweepKernel::V7 => "V7",
            SweepKernel::Wendland => "Wendland",
        }
    }
}

impl FromStr for SweepKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v4" => Ok(SweepKernel::V4),
            "v5" => Ok(SweepKernel::V5),
            "v7" => Ok(SweepKernel::V7),
            "wendland" => Ok(SweepKernel::Wendland),
            _ => Err(Error::InvalidParameter(format!("unknown kernel version `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCase {
    pub amplitude: f64,
    pub delta: f64,
    pub sigma_pd: bool,
    pub precision_pd: bool,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdSweepReport {
    pub kernel: SweepKernel,
    pub stabilized: bool,
    pub cases: Vec<SweepCase>,
}

impl PdSweepReport {
    pub fn sigma_pass(&self) -> usize {
        self.cases.iter().filter(|c| c.sigma_pd).count()
    }

    pub fn precision_pass(&self) -> usize {
        self.cases.iter().filter(|c| c.precision_pd).count()
    }

    pub fn both_pass(&self) -> usize {
        self.cases.iter().filter(|c| c.sigma_pd && c.precision_pd).count()
    }
}

/// Builds the model for every `(A, Δ)` on the `{0.1, ..., 1.0}²` lattice with
/// Matérn (`σ² = 1`, `κ = 2`) fields and records both certificates.
///
/// The stabilized path normalizes `B` and climbs the regularization ladder;
/// the original path uses raw kernels with no regularization.
pub fn pd_sweep(kernel: SweepKernel, grid: &Grid, dag: &FieldDag, stabilized: bool) -> Result<PdSweepReport> {
    let options = if stabilized {
        BuildOptions {
            threshold: false,
            ..BuildOptions::default()
        }
    } else {
        BuildOptions::original()
    };
    let lattice: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let mut cases = Vec::with_capacity(100);
    for &a in &lattice {
        for &d in &lattice {
            let cross = fixtures::uniform_kernels(dag, kernel.kernel(a, d));
            let spec = ModelSpec::new(
                dag.clone(),
                grid.clone(),
                UnivariateMode::Geostat(vec![MaternSpec { sigma2: 1.0, kappa: 2.0 }; dag.p()]),
                cross,
            )?
            .with_options(options);
            let case = match build_joint(&spec) {
                Ok(jp) => SweepCase {
                    amplitude: a,
                    delta: d,
                    sigma_pd: jp.sigma_pd,
                    precision_pd: jp.precision_pd,
                    regularization: jp.applied_regularization,
                },
                Err(Error::PdFailure(_)) | Err(Error::NonPdBlock(_)) => SweepCase {
                    amplitude: a,
                    delta: d,
                    sigma_pd: false,
                    precision_pd: false,
                    regularization: f64::NAN,
                },
                Err(e) => return Err(e),
            };
            cases.push(case);
        }
    }
    Ok(PdSweepReport {
        kernel,
        stabilized,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(p: usize, mean: f64) -> BenchRecord {
        BenchRecord::from_times("x".into(), 10, p, vec![mean; 5], FlopStats::default())
    }

    #[test]
    fn scenario_parsing() {
        let s: Scenario = "car-mdag".parse().unwrap();
        assert_eq!(s, Scenario { mode: ModeKind::Car, graph: GraphKind::Chain });
        assert_eq!("neighbor-fd".parse::<Scenario>().unwrap().mode, ModeKind::Car);
        assert_eq!("geostat-six".parse::<Scenario>().unwrap().to_string(), "geostat-six");
        assert!(matches!("gpu-fd".parse::<Scenario>(), Err(Error::ScenarioUnsupported(_))));
        assert!(Scenario { mode: ModeKind::Car, graph: GraphKind::SixField }.dag(4).is_err());
    }

    #[test]
    fn synthetic_slopes() {
        let lin: Vec<_> = [2, 4, 8, 16].iter().map(|&p| record(p, 0.3 * p as f64)).collect();
        assert!((scaling_exponent(&lin).unwrap() - 1.0).abs() < 1e-12);
        let cubic: Vec<_> = [2, 4, 8, 16].iter().map(|&p| record(p, 1e-3 * (p as f64).powi(3))).collect();
        assert!((scaling_exponent(&cubic).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(scaling_exponent(&lin[..3]), Err(Error::InsufficientPoints { needed: 4, got: 3 }));
    }

    #[test]
    fn trivial_timing_record() {
        let r = time_construction("geostat-chain".parse().unwrap(), 10, 2, 5, 1).unwrap();
        assert_eq!(r.reps, 5);
        assert!(r.min <= r.lq && r.lq <= r.median && r.median <= r.uq && r.uq <= r.max);
        assert!(r.min <= r.mean && r.mean <= r.max);
        assert!(time_construction("geostat-chain".parse().unwrap(), 10, 2, 4, 1).is_err());
    }

    #[test]
    fn single_field_sweep_always_passes() {
        let grid = fixtures::coarse_unit_grid();
        let r = pd_sweep(SweepKernel::V7, &grid, &FieldDag::edgeless(1), true).unwrap();
        assert_eq!(r.both_pass(), 100);
    }

    #[test]
    fn flop_counts_follow_block_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geo = Scenario { mode: ModeKind::Geostat, graph: GraphKind::Chain };
        let car = Scenario { mode: ModeKind::Car, graph: GraphKind::Chain };
        let flops = |s: Scenario, n: usize, rng: &mut ChaCha8Rng| {
            let spec = s.random_spec(n, 4, rng).unwrap();
            construct(&spec, 1e-9).unwrap().flops
        };
        // identical parameters at both sizes
        let mut r1 = rng.clone();
        let (g1, g2) = (flops(geo, 100, &mut rng), flops(geo, 200, &mut r1));
        let ratio = g2.precision_path as f64 / g1.precision_path as f64;
        assert!((8.0 / 1.5..=8.0 * 1.5).contains(&ratio), "geostat ratio {ratio}");
        let mut r2 = rng.clone();
        let (c1, c2) = (flops(car, 100, &mut rng), flops(car, 200, &mut r2));
        let ratio = c2.total() as f64 / c1.total() as f64;
        assert!((4.0 / 1.5..=4.0 * 1.5).contains(&ratio), "car ratio {ratio}");
    }
}
