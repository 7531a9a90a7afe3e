//! Time-local master equations beyond ultraweak coupling.
//!
//! The crate assembles Redfield and Hu-Paz-Zhang generators, rewrites their
//! dissipators as a difference of two GKSL terms (a *pseudo-Lindblad* form),
//! minimizes the weight of the negative term over the pseudo-unitary symmetry
//! group of that form, and propagates the dynamics either by direct
//! integration or by sign-bit quantum trajectories.
//!
//! Module map:
//!
//! - [`opcore`]: dense complex operators, spectra, GKSL dissipators.
//! - [`bath`]: spectral densities and the complex coupling density `G(Δ)`.
//! - [`redfield`]: convolved coupling operators, Lamb shift, Redfield generator.
//! - [`plform`]: jump-operator pairs, symmetry transforms, weights and their
//!   minimization, analytic Kossakowski eigensystem.
//! - [`dynamics`]: RK4 integration, steady states, rates, Gibbs states.
//! - [`plqt`]: pseudo-Lindblad quantum trajectories and ensemble statistics.
//! - [`hubbard`]: extended Hubbard chain benchmark.
//! - [`hpz`]: Hu-Paz-Zhang equation in pseudo-Lindblad form.

pub mod bath;
pub mod dynamics;
pub mod error;
pub mod hpz;
pub mod hubbard;
pub mod opcore;
pub mod plform;
pub mod plqt;
pub mod quad;
pub mod redfield;

pub use error::{Error, Result};
pub use opcore::{Operator, SpectralBasis, C64};
