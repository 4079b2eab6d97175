//! Shared fixtures for the pipeline benchmarks.

use lqr_influence::sysid::TrajectoryDataset;
use lqr_influence::systems::{generate_dataset, GenerationConfig, SystemKind, SystemSpec};
use lqr_influence::Matrix;

/// A benchmark workload: a preset dataset with identity cost weights.
pub struct Fixture {
    pub kind: SystemKind,
    pub data: TrajectoryDataset,
    pub q: Matrix,
    pub r: Matrix,
}

impl Fixture {
    pub fn new(kind: SystemKind, seed: u64) -> Self {
        let data = generate_dataset(
            &SystemSpec::preset(kind),
            &GenerationConfig::preset(kind, seed),
        )
        .expect("preset generation succeeds");
        let (n_x, n_u) = kind.dims();
        Self {
            kind,
            data,
            q: Matrix::identity(n_x),
            r: Matrix::identity(n_u),
        }
    }
}
