//! Low-order spherical-harmonics HRTF representations: least squares (LS),
//! magnitude least squares (MagLS) and notch-masked MagLS (MMagLS).
//!
//! Conventions used throughout:
//!
//! * complex orthonormal spherical harmonics with Condon–Shortley phase,
//!   ACN ordering `i = n² + n + m`;
//! * a directional function is synthesized as `f(Ω) = Σ_i c_i Y_i(Ω)`;
//! * HRTF tensors are indexed `[direction][ear][bin]`, SH coefficient tensors
//!   `[bin][ear][coefficient]`.

mod container;
pub mod error;
pub mod hrtf;
mod lebedev;
pub mod mask;
pub mod metrics;
pub mod opt;
pub mod sh;
pub mod solver;

pub use error::{Error, ErrorClass, Result};
pub use hrtf::{Ear, FrequencyGrid, HrirSet, HrtfSet};
pub use mask::{compute_mask, MaskConfig, NotchMask};
pub use metrics::{ErrorSurface, Metric};
pub use opt::{optimize, OptConfig, OptReport};
pub use sh::{Direction, SamplingGrid, ShBasisMatrix, ShIndex, ShVector};
pub use solver::{ShHrtf, SolverConfig, Transition};
