//! Time-domain Maxwell solver on a uniform Yee lattice.

mod cpml;
mod grid;
mod run;
mod snapshot;
mod source;

use thiserror::Error;

pub use cpml::CpmlParams;
pub use grid::{memory_estimate, EdgeCurrent, GridOptions, LumpedPort, PortSample, Real, SimulationGrid, BLOWUP_LIMIT};
pub use run::{calibration_record, run, PortRecord, RunOptions, RunOutcome, StepObserver};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use source::SourceSpec;

use crate::geometry::MaterialMap;

#[derive(Debug, Error)]
pub enum FdtdError {
    #[error("invalid CFL factor {0} (must be in (0, 1])")]
    InvalidCfl(f64),
    #[error("grid needs {needed} bytes, above the {cap} byte cap")]
    Memory { needed: u64, cap: u64 },
    #[error("solver configuration: {0}")]
    Config(String),
    #[error("instability at step {step}: field magnitude {magnitude:e}")]
    Unstable { step: usize, magnitude: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Build a solver grid around `map` with `padding_cells` (CPML included) on
/// every side.
pub fn init_grid(map: &MaterialMap, padding_cells: usize, opts: &GridOptions) -> Result<SimulationGrid, FdtdError> {
    SimulationGrid::from_map(map, padding_cells, opts)
}
