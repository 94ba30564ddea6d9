//! Boundary-intersection counting for chaotic billiards.

pub mod bim;
pub mod fourier;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod nodal;
pub mod optimize;
pub mod orbits;
pub mod rwm;
pub mod scalar;
pub mod trace;

pub use bim::{EigenMode, SolverConfig, Spectrum};
pub use geometry::{BoundaryCurve, CurveSpec};
pub use nodal::{BICountSequence, BoundarySubset, CountConfig};
pub use orbits::{OrbitTable, PeriodicOrbit};
pub use trace::{LengthSpectrum, TraceFormulaInput};

/// Stability matrices in the precision used throughout the pipeline.
pub type Mat2f = scalar::Mat2<f64>;
