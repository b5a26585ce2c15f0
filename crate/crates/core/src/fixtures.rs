//! Named graphs, grids and model settings used by tests, benchmarks and the CLI.

use std::collections::BTreeMap;

use crate::assemble::{BlockLayout, ModelSpec, UnivariateMode};
use crate::error::Result;
use crate::graph::FieldDag;
use crate::grid::Grid;
use crate::kernels::{CarSpec, CrossKernel, MaternSpec, TriWaveSpec, WendlandSpec};

/// Six fields; moralization marries {1,3}, {1,5} and {3,5} through child 6.
pub fn six_field_dag() -> FieldDag {
    FieldDag::new(6, [(1, 2), (2, 3), (2, 4), (3, 4), (1, 6), (3, 6), (4, 5), (5, 6)]).expect("fixture is acyclic")
}

/// Seven fields with two colliders and a long path, used by the PD sweep.
pub fn seven_field_dag() -> FieldDag {
    FieldDag::new(7, [(1, 2), (1, 3), (2, 4), (3, 4), (2, 5), (4, 6), (5, 6), (6, 7), (3, 7)])
        .expect("fixture is acyclic")
}

/// Five aerosol species: dust, sulphate, black carbon, organic matter, sea salt.
pub fn cams_dag() -> FieldDag {
    let mut d = FieldDag::new(5, [(1, 2), (2, 3), (4, 3), (4, 5), (1, 5)]).expect("fixture is acyclic");
    for (label, name) in [(1, "DU"), (2, "SU"), (3, "BC"), (4, "OM"), (5, "SS")] {
        d.set_name(label, name).expect("label in range");
    }
    d
}

/// `[-1, 1]` at spacing 0.05 (41 sites).
pub fn unit_grid() -> Grid {
    Grid::line(-1.0, 1.0, 0.05).expect("valid grid")
}

/// `[-1, 1]` at spacing 0.1 (21 sites).
pub fn coarse_unit_grid() -> Grid {
    Grid::line(-1.0, 1.0, 0.1).expect("valid grid")
}

/// `[-10, 10]` at spacing 0.1. Inclusive endpoints give 201 sites.
pub fn denoise_grid() -> Grid {
    Grid::line(-10.0, 10.0, 0.1).expect("valid grid")
}

/// Which cross-kernel family the six-field settings use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    TriWave,
    Wendland,
}

impl Family {
    /// V5 Tri-Wave or Wendland with `R = 0.5`.
    pub fn kernel(self, amplitude: f64, delta: f64) -> CrossKernel {
        match self {
            Family::TriWave => CrossKernel::TriWave(TriWaveSpec::v5(amplitude, delta)),
            Family::Wendland => CrossKernel::Wendland(WendlandSpec {
                amplitude,
                delta,
                radius: 0.5,
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::TriWave => "tri-wave",
            Family::Wendland => "wendland",
        }
    }
}

/// Same kernel on every edge of `dag`.
pub fn uniform_kernels(dag: &FieldDag, kernel: CrossKernel) -> BTreeMap<(usize, usize), CrossKernel> {
    dag.edges().map(|e| (e, kernel)).collect()
}

/// Six-field model with `A = 0.1`, `Δ = 0.5` and Matérn `σ² = 1`, `κ = 2`
/// univariate blocks (geostatistical), or CAR blocks with first-order neighbours.
pub fn six_field_spec(grid: Grid, family: Family, car: bool) -> Result<ModelSpec> {
    let dag = six_field_dag();
    let univariate = if car {
        UnivariateMode::Car {
            specs: vec![CarSpec::new(1.0, CarSpec::DEFAULT_PHI_FRAC)?; 6],
            radius: grid.step()[0],
        }
    } else {
        UnivariateMode::Geostat(vec![MaternSpec::new(1.0, 2.0)?; 6])
    };
    let cross = uniform_kernels(&dag, family.kernel(0.1, 0.5));
    ModelSpec::new(dag, grid, univariate, cross)
}

/// Held-out split: the first 50 sites of field 1 are tested, everything else fits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub fit: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn denoise_split(layout: &BlockLayout) -> Split {
    split_leading_sites(layout, 1, 50)
}

/// Holds out sites `0..count` of `field`, in joint-vector indices.
pub fn split_leading_sites(layout: &BlockLayout, field: usize, count: usize) -> Split {
    let held = layout.range(field);
    let test: Vec<usize> = held.clone().take(count).collect();
    let fit = (0..layout.dim()).filter(|i| !(held.start..held.start + count).contains(i)).collect();
    Split { fit, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::unordered;
    use std::collections::BTreeSet;

    #[test]
    fn six_field_parents() {
        let d = six_field_dag();
        assert_eq!(d.parents(5).unwrap(), &[4]);
        assert_eq!(d.parents(6).unwrap(), &[1, 3, 5]);
    }

    #[test]
    fn seven_field_marriages() {
        let m = seven_field_dag().moralize();
        let want: BTreeSet<_> = [unordered(2, 3), unordered(4, 5), unordered(3, 6)].into_iter().collect();
        assert_eq!(m.marriages(), &want);
    }

    #[test]
    fn cams_ci_statement() {
        // BC is separated from DU and SS by {SU, OM}
        let m = cams_dag().moralize();
        assert!(!m.adjacent(3, 1));
        assert!(!m.adjacent(3, 5));
        assert!(m.adjacent(2, 4));
    }

    #[test]
    fn denoise_split_sizes() {
        let layout = BlockLayout::new(&six_field_dag(), denoise_grid().len());
        let s = denoise_split(&layout);
        assert_eq!(denoise_grid().len(), 201);
        assert_eq!(s.test.len(), 50);
        assert_eq!(s.fit.len(), 6 * 201 - 50);
        assert!(s.test.iter().all(|i| !s.fit.contains(i)));
    }
}
