//! Reconstruction of the spatial factor of a separated-variable source
//! `F(x, t) = sigma(t) f(x)` in the penalized unsteady Stokes system, from
//! velocity observations taken outside the source support.
//!
//! The crate is `no_std` (with `alloc`). Everything that touches the file
//! system lives in the companion `stokes-recon-cli` crate.
//!
//! Layout:
//!
//! * [`mesh`]: structured triangulations, source-support tagging and dof maps.
//! * [`fem`]: mini-element (P1-bubble / P1) assembly and backward-Euler
//!   marching of the penalized forward and adjoint systems.
//! * [`inverse`]: Tikhonov cost, adjoint gradient and the fixed-point
//!   reconstruction loop.
//! * [`synthetic`]: benchmark sources, forward data and multiplicative noise.
//! * [`oracles`]: heat-kernel solution, manufactured solutions and the
//!   curl counterexamples.
//! * [`validation`]: the check suite shared by the CLI and the acceptance tests.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod config;
pub mod error;
pub mod fem;
pub mod field;
pub mod inverse;
pub mod mesh;
pub mod oracles;
pub mod quadrature;
pub mod source;
pub mod sparse;
pub mod synthetic;
pub mod validation;

pub use config::SolverConfig;
pub use error::{Error, Result};
pub use fem::{assemble, AssembledOperators, TimeSeries};
pub use field::{ScalarField, VectorField};

pub use mesh::{build_rect_mesh, tag_omega, BoxRegion, DofMap, Mesh, OmegaRegion};
pub use source::{SourceSpec, TimeProfile};
pub use inverse::{ComponentMode, InverseProblem, ReconstructionOptions, ReconstructionState};
pub use synthetic::{ExampleId, NoiseModel};

