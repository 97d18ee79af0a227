//! Constructive scattering theory for semilinear dispersive equations, at
//! desk scale.
//!
//! The crate evolves the nonlinear Schrödinger equation, the Klein–Gordon
//! system and a finite-dimensional toy model on periodic grids, and builds
//! the objects the Duhamel expansion produces around a background solution:
//!
//! * exact multilinear pieces `N_j` of a polynomial nonlinearity
//!   ([`nonlinearity`]),
//! * the nonlinear and tangent flows ([`evolve`]),
//! * finite-horizon wave and scattering maps with convergence diagnostics
//!   ([`scattering`]),
//! * the recursive hierarchy `w_k` whose asymptotic states are the Taylor
//!   coefficients of the scattering map ([`taylor`]),
//! * invariant skew forms and inverse-scattering estimators
//!   ([`consequences`]).
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the
//! experiment CLI live in the companion `scatter-lab` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// the raw kernels take their buffers and shapes as separate slices
#![allow(clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod consequences;
pub mod error;
pub mod evolve;
pub mod fft;
pub mod field;
pub mod fit;
pub mod grid;
pub mod nonlinearity;
pub mod norms;
pub mod profiles;
pub mod propagator;
pub mod scattering;
pub mod taylor;
pub mod trajectory;

pub use num_complex::Complex64;

pub use crate::error::{Error, Result};
pub use crate::evolve::{IntegratorConfig, Scheme};
pub use crate::field::ComplexField;
pub use crate::grid::{GridRef, SpatialGrid};
pub use crate::nonlinearity::{CouplingProfile, NonlinearityKind, NonlinearitySpec};
pub use crate::norms::{NormReport, StrichartzExponents};
pub use crate::propagator::{PropagatorKind, PropagatorSpec};
pub use crate::scattering::{ScatterThresholds, ScatteringResult};
pub use crate::taylor::SeriesResult;
pub use crate::trajectory::Trajectory;
