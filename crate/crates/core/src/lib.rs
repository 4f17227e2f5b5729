//! Pseudo-spectral solver for the 3D viscous primitive equations on a
//! periodic box, with z-parity constraints, and the numerical experiments
//! built on top of it.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod diagnostics;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod fit;
pub mod integrator;
pub mod kick;
pub mod ops;
pub mod rng;
pub mod snapshot;
pub mod transform;

pub use basis::{build_basis, EigenBasis, ModeDescriptor, Slot};
pub use diagnostics::{AbsorptionReport, Sample, TimeSeries};
pub use domain::{Axis, DomainSpec};
pub use dynamics::{ForcingComponent, ForcingEntry, PhysParams, RhsEvaluator, Tendency};
pub use error::{Error, Result};
pub use field::{ConstraintResidual, Parity, Phase, ScalarField, State, VelocityField};
pub use integrator::{evolve, step, truncated_map, Checkpoint, Scheme, Solver, StepConfig};
pub use transform::Transform;
