//! Exact transfer-operator numerics for suspension semiflows over one-sided
//! subshifts of finite type with locally constant roof and potential.
//!
//! Every operator in the crate is a finite matrix acting on functions of the
//! first `k` symbols, so spectral quantities are computed exactly (up to
//! floating point) rather than approximated by discretization.

pub mod complexop;
pub mod correlations;
pub mod dolgopyat;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod orbits;
pub mod potential;
pub mod sft;
pub mod transfer;

pub use error::{Error, Result};
pub use models::{preset, random_model, SuspensionModel, PRESETS};
pub use potential::{ComplexFn, CylinderMeasure, LocallyConstantFn, RealFn, Scalar};
pub use sft::{BlockIndex, SymbolicSystem, Theta, Word};
pub use transfer::{GibbsMeasure, NormalizedPotential, SpectralData, TransferMatrix};
pub use correlations::{CorrelationTable, HeightProfile, Observable, SuspensionPoint};
pub use dolgopyat::{BranchPair, ContractionParams, CylinderFamily, RepresentativeSet};
pub use io::ModelFile;
