//! Command-line flags and their resolution into core types.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmrf_core::assemble::{BuildOptions, PrecisionUpdate};
use gmrf_core::fixtures;
use gmrf_core::kernels::{CarSpec, CrossKernel, MaternSpec, TriWaveSpec, WendlandSpec};
use gmrf_core::{parse_dag, FieldDag, Grid, ModelSpec, UnivariateMode};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "gmrf", version, about = "Build and inspect multivariate Gaussian Markov random fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build Σ and Σ⁻¹ and write matrices, metadata and heatmaps.
    Build(BuildArgs),
    /// Print the marriages and conditional-independence pairs of a field graph.
    Moralize(GraphArgs),
    /// Time joint constructions and emit one CSV row per repetition.
    Bench(BenchArgs),
    /// Hold-out prediction on the six-field denoising fixture.
    Predict(PredictArgs),
    /// Positive-definiteness sweep over the 10 x 10 (A, Δ) lattice.
    PdSweep(SweepArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct GraphArgs {
    /// Edge-list file: `parent>child` per line, `#` comments, `name <label> <alias>`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Built-in graph: six, seven, cams, or chain:N.
    #[arg(long)]
    pub fixture: Option<String>,
}

impl GraphArgs {
    pub fn resolve(&self) -> Result<FieldDag, CliError> {
        if let Some(path) = &self.graph {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            return Ok(parse_dag(&text)?);
        }
        let name = self.fixture.as_deref().unwrap_or_default();
        match name {
            "six" => Ok(fixtures::six_field_dag()),
            "seven" => Ok(fixtures::seven_field_dag()),
            "cams" => Ok(fixtures::cams_dag()),
            _ => match name.strip_prefix("chain:").map(str::parse::<usize>) {
                Some(Ok(p)) if p >= 1 => Ok(FieldDag::chain(p)),
                _ => Err(CliError::Usage(format!("unknown fixture `{name}` (six, seven, cams, chain:N)"))),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Lower corner, one value per axis (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "-1", allow_hyphen_values = true)]
    pub lo: Vec<f64>,
    /// Upper corner, one value per axis.
    #[arg(long, value_delimiter = ',', default_value = "1", allow_hyphen_values = true)]
    pub hi: Vec<f64>,
    /// Spacing, one value per axis.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub step: Vec<f64>,
}

impl GridArgs {
    pub fn resolve(&self) -> Result<Grid, CliError> {
        let dim = self.lo.len();
        if self.hi.len() != dim || self.step.len() != dim {
            return Err(CliError::Usage("--lo, --hi and --step need the same number of axes".into()));
        }
        Ok(Grid::new(dim, &self.lo, &self.hi, &self.step)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Geostat,
    Car,
    Taper,
}

#[derive(Debug, Args)]
pub struct ModeArgs {
    #[arg(long, value_enum, default_value_t = Mode::Geostat)]
    pub mode: Mode,
    /// Marginal variance of every field.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Matérn inverse range (geostat and taper modes).
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    /// CAR dependence as a fraction of the admissible maximum.
    #[arg(long, default_value_t = CarSpec::DEFAULT_PHI_FRAC)]
    pub phi_frac: f64,
    /// CAR neighborhood radius; defaults to the first grid step.
    #[arg(long)]
    pub car_radius: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub taper_radius: f64,
}

impl ModeArgs {
    pub fn resolve(&self, p: usize, grid: &Grid) -> Result<UnivariateMode, CliError> {
        Ok(match self.mode {
            Mode::Geostat => UnivariateMode::Geostat(vec![MaternSpec::new(self.sigma2, self.kappa)?; p]),
            Mode::Taper => UnivariateMode::Taper {
                specs: vec![MaternSpec::new(self.sigma2, self.kappa)?; p],
                radius: self.taper_radius,
            },
            Mode::Car => UnivariateMode::Car {
                specs: vec![CarSpec::new(self.sigma2, self.phi_frac)?; p],
                radius: self.car_radius.unwrap_or(grid.step()[0]),
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Kernel for every edge, e.g. `v5:a=0.1,delta=0.5` or `wendland:a=0.1,delta=0.5,r=0.5`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Per-edge kernel overriding --kernel, e.g. `1>2=v7:a=0.3,delta=-0.2`. Repeatable.
    #[arg(long = "edge-kernel")]
    pub edge_kernels: Vec<String>,
}

impl KernelArgs {
    /// Edges left without a kernel surface later as `MissingKernel`.
    pub fn resolve(&self, dag: &FieldDag) -> Result<BTreeMap<(usize, usize), CrossKernel>, CliError> {
        let mut out = BTreeMap::new();
        if let Some(text) = &self.kernel {
            let k = parse_kernel(text)?;
            out.extend(dag.edges().map(|e| (e, k)));
        }
        for item in &self.edge_kernels {
            let (edge, kernel) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--edge-kernel `{item}` should look like `1>2=v5:a=0.1`")))?;
            let (a, b) = edge
                .split_once('>')
                .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| CliError::Usage(format!("bad edge `{edge}` in --edge-kernel")))?;
            if !dag.has_edge(a, b) {
                return Err(CliError::Usage(format!("--edge-kernel names {a}>{b}, which is not an edge of the graph")));
            }
            out.insert((a, b), parse_kernel(kernel)?);
        }
        Ok(out)
    }
}

/// `<family>[:key=value,...]` with families v4, v5, v7, wendland and keys a, delta, r.
pub fn parse_kernel(text: &str) -> Result<CrossKernel, CliError> {
    let (family, rest) = text.split_once(':').unwrap_or((text, ""));
    let (mut a, mut delta, mut r) = (0.1, 0.5, 0.5);
    for pair in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("kernel parameter `{pair}` needs key=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("kernel parameter `{pair}` is not a number")))?;
        match key.trim().to_ascii_lowercase().as_str() {
            "a" => a = value,
            "delta" => delta = value,
            "r" => r = value,
            other => return Err(CliError::Usage(format!("unknown kernel parameter `{other}`"))),
        }
    }
    let kernel = match family.trim().to_ascii_lowercase().as_str() {
        "v4" => CrossKernel::TriWave(TriWaveSpec::v4(a, delta)),
        "v5" => CrossKernel::TriWave(TriWaveSpec::v5(a, delta)),
        "v7" => CrossKernel::TriWave(TriWaveSpec::v7(a, delta)),
        "wendland" => CrossKernel::Wendland(WendlandSpec {
            amplitude: a,
            delta,
            radius: r,
        }),
        other => return Err(CliError::Usage(format!("unknown kernel family `{other}` (v4, v5, v7, wendland)"))),
    };
    kernel.validate()?;
    Ok(kernel)
}

#[derive(Debug, Args)]
pub struct StabilizeArgs {
    /// Use the raw regression blocks.
    #[arg(long)]
    pub no_normalize: bool,
    /// Build once with no diagonal regularization.
    #[arg(long)]
    pub no_regularize: bool,
    /// Keep every precision entry.
    #[arg(long)]
    pub no_threshold: bool,
    /// Evaluate the precision update through the dense block formula.
    #[arg(long)]
    pub literal: bool,
}

impl StabilizeArgs {
    pub fn options(&self) -> BuildOptions {
        BuildOptions {
            normalize_b: !self.no_normalize,
            regularize: !self.no_regularize,
            threshold: !self.no_threshold,
            update: if self.literal {
                PrecisionUpdate::Literal
            } else {
                PrecisionUpdate::Structural
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[command(flatten)]
    pub kernels: KernelArgs,
    #[command(flatten)]
    pub stabilize: StabilizeArgs,
    /// Write matrices as CSV instead of the binary format.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl BuildArgs {
    pub fn spec(&self) -> Result<ModelSpec, CliError> {
        let dag = self.graph.resolve()?;
        let grid = self.grid.resolve()?;
        let univariate = self.mode.resolve(dag.p(), &grid)?;
        let cross = self.kernels.resolve(&dag)?;
        Ok(ModelSpec::new(dag, grid, univariate, cross)?.with_options(self.stabilize.options()))
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenarios `<geostat|matern|car|neighbor|taper>-<fd|chain|mdag|six|moral>`, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scenario: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Field counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "6")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Triwave,
    Wendland,
}

impl From<FamilyArg> for fixtures::Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Triwave => fixtures::Family::TriWave,
            FamilyArg::Wendland => fixtures::Family::Wendland,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Triwave)]
    pub family: FamilyArg,
    /// Univariate blocks: geostat or car.
    #[arg(long, value_enum, default_value_t = Mode::Geostat)]
    pub mode: Mode,
    /// Observation noise variance used to simulate and to predict.
    #[arg(long, default_value_t = 0.1)]
    pub tau2: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Directory for `cv.csv`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// v4, v5, v7, wendland, or all.
    #[arg(long, default_value = "all")]
    pub kernel: String,
    #[command(flatten)]
    pub grid: SweepGridArgs,
    /// Built-in graph: six, seven, cams, or chain:N.
    #[arg(long, default_value = "seven")]
    pub fixture: String,
    /// Edge-list file; overrides --fixture.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Directory for `pd_sweep.csv`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepGridArgs {
    #[arg(long, value_delimiter = ',', default_value = "-1", allow_hyphen_values = true)]
    pub lo: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1", allow_hyphen_values = true)]
    pub hi: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub step: Vec<f64>,
}

impl SweepArgs {
    pub fn dag(&self) -> Result<FieldDag, CliError> {
        GraphArgs {
            graph: self.graph.clone(),
            fixture: Some(self.fixture.clone()),
        }
        .resolve()
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        GridArgs {
            lo: self.grid.lo.clone(),
            hi: self.grid.hi.clone(),
            step: self.grid.step.clone(),
        }
        .resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_strings() {
        assert_eq!(parse_kernel("v5:a=0.2,delta=-0.3").unwrap(), CrossKernel::TriWave(TriWaveSpec::v5(0.2, -0.3)));
        assert_eq!(parse_kernel("V7").unwrap(), CrossKernel::TriWave(TriWaveSpec::v7(0.1, 0.5)));
        assert_eq!(
            parse_kernel("wendland:a=1,delta=0.2,r=0.4").unwrap(),
            CrossKernel::Wendland(WendlandSpec {
                amplitude: 1.0,
                delta: 0.2,
                radius: 0.4
            })
        );
        assert!(matches!(parse_kernel("cosine"), Err(CliError::Usage(_))));
        assert!(matches!(parse_kernel("v5:b=1"), Err(CliError::Usage(_))));
        assert!(matches!(parse_kernel("v5:delta=0"), Err(CliError::Core(gmrf_core::Error::ZeroDelta))));
    }

    #[test]
    fn per_edge_kernels_override_the_global_one() {
        let dag = FieldDag::chain(3);
        let args = KernelArgs {
            kernel: Some("v5".into()),
            edge_kernels: vec!["2>3=wendland:a=0.4".into()],
        };
        let map = args.resolve(&dag).unwrap();
        assert_eq!(map[&(1, 2)], CrossKernel::TriWave(TriWaveSpec::v5(0.1, 0.5)));
        assert!(matches!(map[&(2, 3)], CrossKernel::Wendland(_)));
        let partial = KernelArgs {
            kernel: None,
            edge_kernels: vec!["1>2=v4".into()],
        };
        assert_eq!(partial.resolve(&dag).unwrap().len(), 1);
        let stray = KernelArgs {
            kernel: None,
            edge_kernels: vec!["1>3=v4".into()],
        };
        assert!(stray.resolve(&dag).is_err());
    }

    #[test]
    fn fixture_names() {
        let g = |name: &str| GraphArgs {
            graph: None,
            fixture: Some(name.into()),
        };
        assert_eq!(g("six").resolve().unwrap().p(), 6);
        assert_eq!(g("chain:4").resolve().unwrap().edge_count(), 3);
        assert!(g("chain:0").resolve().is_err());
        assert!(g("nine").resolve().is_err());
    }
}
