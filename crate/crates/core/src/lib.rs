//! Bayesian inference for two-period sequential treatments with latent
//! principal strata.
//!
//! The engine simulates studies in which a binary first treatment affects a
//! binary intermediate outcome, a second treatment follows, and a continuous
//! final outcome is measured. Average effects of the four treatment sequences
//! are estimated by Gibbs sampling under three assumptions about how the
//! second treatment was assigned:
//!
//! * [`SpecKind::Lsi`]: assignment may depend on the principal stratum
//!   `(Y1(0), Y1(1))`;
//! * [`SpecKind::Si1`]: assignment depends on the observed intermediate
//!   outcome only, outcomes still modelled within strata;
//! * [`SpecKind::Si2`]: every model conditions on the observed intermediate
//!   outcome.
//!
//! Under the stratum-level fit the second-period assignment probabilities of
//! paired strata can be compared ([`sensitivity`]) to assess whether
//! sequential ignorability is tenable.

pub mod config;
pub mod dataset;
pub mod error;
pub mod model;
pub mod normal;
pub mod posterior;
pub mod report;
pub mod sampler;
pub mod sensitivity;
pub mod simgen;

pub use dataset::{Dataset, LatentTruth, Unit};
pub use error::{Error, Result};
pub use model::{ParameterVector, PrincipalStratum, SpecKind, TreatmentSequence};
