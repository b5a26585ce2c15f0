//! Joint covariance and sparse precision matrices for multivariate spatial
//! fields whose dependence among fields is declared by a DAG.
//!
//! Each field is regressed on its parent fields through displacement kernels,
//! `Y = B Y + S Z`, with `B` strictly block lower triangular in topological
//! order. The joint covariance is grown block row by block row and the
//! precision matrix is grown alongside it, so the precision never requires an
//! `np x np` inversion. With CAR univariate blocks both the field graph and the
//! site graph contribute exact zeros to the precision.

pub mod analyze;
pub mod assemble;
pub mod bench;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod grid;
pub mod infer;
pub mod kernels;
pub mod linalg;
pub mod stabilize;

pub use assemble::{build_joint, construct, BlockLayout, JointPair, ModelSpec, UnivariateMode};
pub use error::{Error, Result};
pub use graph::{parse_dag, FieldDag, MoralGraph};
pub use grid::{Grid, NeighborhoodMatrix};
pub use kernels::{CarSpec, CrossKernel, MaternSpec, TriWaveSpec, WendlandSpec};
pub use stabilize::StabilizeConfig;
