//! Reduced basis and sparse-grid surrogates for the stochastic
//! Landau-Lifshitz-Gilbert equation driven by a single Brownian motion.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod field_ops;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod pod;
pub mod rom;
pub mod setup;
pub mod sgrbp;
pub mod sparse_grid;
pub mod tps;

pub use config::ExperimentConfig;
pub use error::{Error, ErrorKind, Result};
pub use fem::{FeScalarField, FeVectorField, GramSet, TriMesh};
pub use field_ops::{rot_exp, ExternalField, NoiseModel};
pub use noise::{BrownianPath, ParamVector};
pub use pod::{pod_compute, projection_error, Quantity, ReducedBasis, SnapshotSet};
pub use rom::{build_rom_spaces, rom_infsup, rom_run, rom_run_partial, supremizer, RomOptions, RomSpaces, RomTrajectory, Variant};
pub use metrics::{galerkin_pod_error, physical_diagnostics, rate_fit, ErrorReport, PhysicalDiagnostics};
pub use setup::Problem;
pub use sgrbp::{sgrbp_build, SgRbpSurrogate};
pub use sparse_grid::{build_index_set, MultiIndexSet, SparseGridOp};
pub use tps::{tps_run, tps_run_from, tps_step, TpsConfig, Trajectory};
