//! Numerical core for distributed functional scalar quantization (DFSQ).
//!
//! Builds companding quantizers from point densities, derives point densities
//! that are optimal for a downstream computation `g`, and evaluates both the
//! high-resolution distortion limits and the Monte Carlo distortion of real
//! finite-codebook quantizers.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI, and
//! thread-parallel drivers live in the companion `dfsq` crate.

#![no_std]
// `!(a < b)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod computations;
pub mod decoders;
pub mod design;
pub mod distortion;
mod error;
pub mod interp;
pub mod mc;
pub mod quadrature;
pub mod quantizer;
pub mod sensitivity;
pub mod sources;

pub use computations::{Builtin, Computation, NonSmooth, Stacked};
pub use decoders::{Decoder, DecoderKind};
pub use design::PointDensity;
pub use distortion::{DistortionReport, RateAllocation};
pub use error::{Error, Result};
pub use mc::{McPlan, MeanEstimate};
pub use quantizer::CompandingQuantizer;
pub use sensitivity::SensitivityProfile;
pub use sources::{make_source, Bits, Interval, ProductSource, SourceKind, SourceModel};
