//! Lifecycle pension-mix solver: PAYGO, EET and private savings under a
//! Makeham population, closed-form participant controls, age-dependent
//! preference orderings and the government's optimal contribution mix.

pub mod demography;
pub mod error;
pub mod government;
pub mod lifecycle;
pub mod montecarlo;
pub mod preference;
pub mod quadrature;
pub mod scenario;
pub mod sweep;

pub use error::{Error, Result};
pub use scenario::{load_scenario, validate, DerivedConstants, Model, Scenario};
