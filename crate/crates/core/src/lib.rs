//! Deformation theory of holomorphic-Higgs pairs on flat complex tori,
//! computed spectrally.
//!
//! The building blocks are truncated Fourier fields ([`torus`]) and
//! matrix-valued forms ([`form`]). On top of them sit the background data
//! ([`higgs`]), the DGLA ([`dgla`]), the deformed operator
//! ([`deformation`]), finite Hodge theory ([`hodge`]), the Kuranishi series
//! ([`kuranishi`]) and gauge actions ([`gauge`]).

pub mod config;
pub mod deformation;
pub mod dgla;
pub mod error;
pub mod form;
pub mod gauge;
pub mod grid;
pub mod higgs;
pub mod hodge;
pub mod identities;
pub mod kuranishi;
pub mod layout;
pub mod random;
pub mod resolver;
pub mod suite;
pub mod torus;

pub use dgla::{Convention, Dgla, GradedElement};
pub use error::{Error, Result};
pub use form::Form;
pub use higgs::{chern, validate_higgs, ChernData, HiggsPairConfig, MetricSpec, ValidationReport};
pub use num_complex::Complex64 as C64;
pub use torus::{Dealias, Scalar, Torus, TorusGeometry};
