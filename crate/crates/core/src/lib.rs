//! Indirect Wyner-Ziv rate-distortion: Blahut-Arimoto solver, second-order
//! dispersion analysis, finite-blocklength bounds and a Poisson functional
//! representation codec for finite-alphabet sources.

pub mod bounds;
pub mod codec;
pub mod dispersion;
pub mod error;
pub mod info;
pub mod model;
pub mod region;
pub mod rng;
pub mod solver;
pub mod sweep;

pub use bounds::{BoundEstimate, BoundQuery};
pub use codec::{SharedRandomness, SimulationParams, SimulationReport};
pub use dispersion::{MomentSummary, MvnEngine, MvnOptions};
pub use error::{Error, Result};
pub use model::{GaussianMixtureParams, JointSourceModel, ModelTables, Symbol};
pub use solver::{
    solve, BaSolution, Distortions, IterationRecord, ReconstructionMap, SolveOptions,
    TestChannel,
};
pub use region::{RegionEvaluator, RegionPoint};
pub use sweep::{sweep_lagrange_grid, Sweep, SweepCell};
