//! Probabilistic control of stochastic plants with mixture density networks.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the experiment harness uses.

pub mod baseline;
pub mod control_law;
pub mod dual;
pub mod error;
pub mod harness;
pub mod mdn;
pub mod nn;
pub mod plants;
pub mod scalar;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network = nn::Network<f64>;
pub type MixtureParams = mdn::MixtureParams<f64>;
pub type MdnHead = mdn::MdnHead<f64>;
pub type StateVector = dual::StateVector<f64>;
pub type ForwardModel = dual::ForwardModel<f64>;
pub type InverseController = dual::InverseController<f64>;
pub type CostWeights = control_law::CostWeights<f64>;
pub type ChiVector = control_law::ChiVector<f64>;
pub type ControlBounds = control_law::ControlBounds<f64>;
pub type Plant = plants::Plant<f64>;
pub type NoiseMixture = plants::NoiseMixture<f64>;
pub type ReferenceModel = plants::ReferenceModel<f64>;
pub type BaselinePair = baseline::BaselinePair<f64>;
pub type StabilityReport = stability::StabilityReport<f64>;
